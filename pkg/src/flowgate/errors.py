"""Exception hierarchy shared across the toolkit.

Validation-type errors (bad inputs, bad configs) and runtime-type errors
(training, serialization) are kept distinct so the CLI can map them to its
exit-code contract (2 for validation, 3 for runtime).
"""
from __future__ import annotations


class FlowgateError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(FlowgateError):
    """Bad input data, config, or arguments; CLI exit code 2."""


class RuntimeFailure(FlowgateError):
    """Failure while training or writing artifacts; CLI exit code 3."""


# --- ingest ---------------------------------------------------------------

class MissingLabelColumn(ValidationError):
    pass


class RowWidthMismatch(ValidationError):
    def __init__(self, line: int, expected: int, got: int):
        super().__init__(f"line {line}: expected {expected} cells, got {got}")
        self.line = line


class UnparseableNumber(ValidationError):
    def __init__(self, line: int, column: str, value: str):
        super().__init__(f"line {line}, column {column!r}: cannot parse {value!r}")
        self.line = line
        self.column = column


class SchemaMismatch(ValidationError):
    pass


class EmptyDataset(ValidationError):
    pass


class WidthMismatch(ValidationError):
    pass


class UnknownLabel(ValidationError):
    def __init__(self, name: str):
        super().__init__(f"label {name!r} is not in the class schema")
        self.name = name


class ClassTooSmall(ValidationError):
    def __init__(self, name: str):
        super().__init__(f"class {name!r} has fewer than 2 records; cannot stratify")
        self.name = name


# --- resample -------------------------------------------------------------

class KTooLarge(ValidationError):
    pass


class TargetBelowCurrent(ValidationError):
    pass


class TargetAboveCurrent(ValidationError):
    pass


class TooFewSamples(ValidationError):
    pass


class UnmappedClass(ValidationError):
    def __init__(self, name: str):
        super().__init__(f"class {name!r} has no category mapping")
        self.name = name


class InvalidPlan(ValidationError):
    pass


# --- neuralnet ------------------------------------------------------------

class BadDimension(ValidationError):
    pass


class ShapeMismatch(ValidationError):
    pass


class CorruptModel(RuntimeFailure):
    pass


# --- pipelines ------------------------------------------------------------

class MissingSubModel(ValidationError):
    def __init__(self, category: str):
        super().__init__(f"no sub-classifier loaded for category {category!r}")
        self.category = category


# --- eval -----------------------------------------------------------------

class LengthMismatch(ValidationError):
    pass


class IndexOutOfRange(ValidationError):
    pass


class SinkUnwritable(RuntimeFailure):
    pass
