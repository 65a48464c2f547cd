"""CSV ingestion, cleaning, standardization, label encoding, and splitting.

Input dialect: RFC-4180-style CSV, UTF-8, header row, label column "Label".
Header names are whitespace-trimmed before matching because the public
CICIDS-2017 files carry leading spaces. Feature cells parse as decimal
floats or the literals Infinity/-Infinity/NaN; non-finite values survive
parsing and are dropped by `clean`.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterable, Sequence

import numpy as np

from .data import ClassSchema, FlowDataset
from .errors import (
    ClassTooSmall,
    EmptyDataset,
    MissingLabelColumn,
    RowWidthMismatch,
    SchemaMismatch,
    UnknownLabel,
    UnparseableNumber,
    WidthMismatch,
)

LABEL_COLUMN = "Label"


@dataclass(frozen=True)
class ScalerParams:
    """Per-feature mean and population standard deviation."""

    means: np.ndarray
    stds: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "means", np.asarray(self.means, dtype=np.float64))
        object.__setattr__(self, "stds", np.asarray(self.stds, dtype=np.float64))
        if self.means.shape != self.stds.shape or self.means.ndim != 1:
            raise WidthMismatch("means and stds must be 1-D vectors of equal length")
        if np.any(self.stds < 0):
            raise WidthMismatch("standard deviations must be non-negative")

    def to_json(self) -> dict:
        return {"means": self.means.tolist(), "stds": self.stds.tolist()}

    @classmethod
    def from_json(cls, obj) -> "ScalerParams":
        return cls(np.asarray(obj["means"]), np.asarray(obj["stds"]))


@dataclass(frozen=True)
class SplitSpec:
    """Train/test split parameters; fraction 4/5 reproduces a 4:1 split."""

    train_fraction: float = 0.8
    stratified: bool = True
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise SchemaMismatch("train_fraction must lie in (0, 1)")


def _open_source(source) -> IO[str]:
    if isinstance(source, (str, Path)):
        return open(source, "r", encoding="utf-8", errors="replace", newline="")
    if isinstance(source, bytes):
        return io.StringIO(source.decode("utf-8", errors="replace"))
    if hasattr(source, "read"):
        first = source.read(0)
        if isinstance(first, bytes):
            return io.TextIOWrapper(source, encoding="utf-8", errors="replace", newline="")
        return source
    raise SchemaMismatch(f"unsupported CSV source {type(source)!r}")


def parse_csv(source, schema: ClassSchema | None = None) -> FlowDataset:
    """Parse a header-led flow CSV into a FlowDataset.

    Every non-label column is a feature. Rows that exactly repeat the header
    (an artifact of concatenated capture files) and blank rows are skipped.
    Label values are stored verbatim (whitespace-trimmed); they are validated
    against the schema only at encoding time.
    """
    stream = _open_source(source)
    reader = csv.reader(stream)
    try:
        header = next(reader)
    except StopIteration:
        raise MissingLabelColumn("empty CSV: no header row") from None
    header = [h.strip() for h in header]
    if LABEL_COLUMN not in header:
        raise MissingLabelColumn(f"no {LABEL_COLUMN!r} column in header")
    label_pos = header.index(LABEL_COLUMN)

    # keep the first occurrence of a duplicated feature name (some public
    # files repeat a column); later duplicates are ignored entirely
    feature_pos: list[int] = []
    feature_names: list[str] = []
    seen: set[str] = set()
    for pos, name in enumerate(header):
        if pos == label_pos or name in seen:
            continue
        seen.add(name)
        feature_pos.append(pos)
        feature_names.append(name)

    if schema is not None and schema.feature_width is not None:
        if len(feature_names) != schema.feature_width:
            raise SchemaMismatch(
                f"schema declares {schema.feature_width} features, CSV has {len(feature_names)}"
            )

    width = len(header)
    rows: list[list[float]] = []
    labels: list[str] = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if [c.strip() for c in row] == header:
            continue
        if len(row) != width:
            raise RowWidthMismatch(lineno, width, len(row))
        values = []
        for pos in feature_pos:
            cell = row[pos].strip()
            try:
                values.append(float(cell))
            except ValueError:
                raise UnparseableNumber(lineno, header[pos], cell) from None
        rows.append(values)
        labels.append(row[label_pos].strip())

    features = np.asarray(rows, dtype=np.float64).reshape(len(rows), len(feature_names))
    return FlowDataset(features, np.asarray(labels, dtype=object), feature_names, schema)


def _format_cell(x: float) -> str:
    x = float(x)
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    return repr(x)


def write_csv(d: FlowDataset, sink) -> None:
    """Write a dataset in the same dialect parse_csv reads.

    Finite values are emitted with shortest round-trip decimal reprs, so a
    parse/write round-trip is bit-exact.
    """
    own = isinstance(sink, (str, Path))
    stream = open(sink, "w", encoding="utf-8", newline="") if own else sink
    try:
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(list(d.feature_names) + [LABEL_COLUMN])
        for i in range(len(d)):
            writer.writerow([_format_cell(x) for x in d.features[i]] + [str(d.labels[i])])
    finally:
        if own:
            stream.close()


def merge(datasets: Sequence[FlowDataset]) -> FlowDataset:
    """Concatenate datasets with identical feature_names, preserving order."""
    if not datasets:
        raise EmptyDataset("nothing to merge")
    first = datasets[0]
    for d in datasets[1:]:
        if d.feature_names != first.feature_names:
            raise SchemaMismatch("feature names differ between datasets")
    return FlowDataset(
        np.concatenate([d.features for d in datasets], axis=0),
        np.concatenate([d.labels for d in datasets], axis=0),
        list(first.feature_names),
        first.schema,
    )


def clean(d: FlowDataset) -> tuple[FlowDataset, int]:
    """Drop every record containing NaN or +/-infinity; keep survivor order.

    Returns the cleaned dataset and the removed-record count.
    """
    keep = np.isfinite(d.features).all(axis=1)
    removed = int((~keep).sum())
    if removed == 0:
        return d, 0
    return d.select(keep), removed


def fit_scaler(d: FlowDataset) -> ScalerParams:
    """Per-feature mean and population (divide-by-n) standard deviation."""
    if len(d) == 0:
        raise EmptyDataset("cannot fit a scaler on an empty dataset")
    return ScalerParams(d.features.mean(axis=0), d.features.std(axis=0))


def apply_scaler(d: FlowDataset, p: ScalerParams) -> FlowDataset:
    """Standardize features to (x - mean) / std; constant columns map to 0."""
    if p.means.shape[0] != d.width:
        raise WidthMismatch(f"scaler width {p.means.shape[0]} vs dataset width {d.width}")
    safe = np.where(p.stds == 0.0, 1.0, p.stds)
    z = (d.features - p.means) / safe
    z[:, p.stds == 0.0] = 0.0
    return FlowDataset(z, d.labels.copy(), list(d.feature_names), d.schema)


def invert_scaler(d: FlowDataset, p: ScalerParams) -> FlowDataset:
    """Undo apply_scaler: z -> z * std + mean (constant columns recover the mean)."""
    if p.means.shape[0] != d.width:
        raise WidthMismatch(f"scaler width {p.means.shape[0]} vs dataset width {d.width}")
    x = d.features * p.stds + p.means
    return FlowDataset(x, d.labels.copy(), list(d.feature_names), d.schema)


def encode_labels(d: FlowDataset, schema: ClassSchema) -> tuple[np.ndarray, np.ndarray]:
    """Map labels to schema indices plus a one-hot matrix (width = class count)."""
    positions = {name: i for i, name in enumerate(schema.classes)}
    idx = np.empty(len(d), dtype=np.int64)
    for i, lab in enumerate(d.labels):
        if lab not in positions:
            raise UnknownLabel(lab)
        idx[i] = positions[lab]
    onehot = np.zeros((len(d), len(schema.classes)), dtype=np.float64)
    onehot[np.arange(len(d)), idx] = 1.0
    return idx, onehot


def split(d: FlowDataset, spec: SplitSpec) -> tuple[FlowDataset, FlowDataset]:
    """Deterministic seeded split into train and test.

    Stratified mode rounds each class to the nearest train count, clamped so
    both sides keep at least one record per class; non-stratified mode takes
    a plain random cut. Original record order is preserved inside each side.
    """
    n = len(d)
    if n == 0:
        raise EmptyDataset("cannot split an empty dataset")
    rng = np.random.default_rng(spec.seed)
    if not spec.stratified:
        perm = rng.permutation(n)
        n_train = int(round(n * spec.train_fraction))
        n_train = min(max(n_train, 1), n - 1) if n > 1 else n_train
        train_idx = np.sort(perm[:n_train])
        test_idx = np.sort(perm[n_train:])
        return d.select(train_idx), d.select(test_idx)

    by_class: dict[str, list[int]] = {}
    for i, lab in enumerate(d.labels):
        by_class.setdefault(lab, []).append(i)
    train_parts: list[np.ndarray] = []
    test_parts: list[np.ndarray] = []
    for name, members in by_class.items():
        if len(members) < 2:
            raise ClassTooSmall(name)
        members = np.asarray(members)
        perm = rng.permutation(len(members))
        k = int(round(len(members) * spec.train_fraction))
        k = min(max(k, 1), len(members) - 1)
        train_parts.append(members[perm[:k]])
        test_parts.append(members[perm[k:]])
    train_idx = np.sort(np.concatenate(train_parts))
    test_idx = np.sort(np.concatenate(test_parts))
    return d.select(train_idx), d.select(test_idx)


def save_scaler(p: ScalerParams, sink) -> None:
    payload = json.dumps(p.to_json(), sort_keys=True)
    if isinstance(sink, (str, Path)):
        Path(sink).write_text(payload + "\n", encoding="utf-8")
    else:
        sink.write(payload + "\n")


def load_scaler(source) -> ScalerParams:
    if isinstance(source, (str, Path)):
        obj = json.loads(Path(source).read_text(encoding="utf-8"))
    else:
        obj = json.load(source)
    return ScalerParams.from_json(obj)


def parse_csv_files(paths: Iterable[str | Path], schema: ClassSchema | None = None) -> FlowDataset:
    """Parse and merge several CSV files in the given order."""
    datasets = [parse_csv(p, schema) for p in paths]
    return merge(datasets)
