"""Confusion matrices, accuracy/precision/recall/F1, report artifacts, and
the balanced-versus-original contrast experiment.

Zero-denominator conventions: precision with TP+FP=0 is 0, recall with
TP+FN=0 is 0, F1 with P+R=0 is 0. Multi-class accuracy is trace/total; the
binary (TP+TN)/(TP+TN+FP+FN) form applies per class one-vs-rest.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import FlowDataset
from .errors import (
    EmptyDataset,
    IndexOutOfRange,
    LengthMismatch,
    SchemaMismatch,
    SinkUnwritable,
)
from .nnet import MlpModel, predict


@dataclass
class ConfusionMatrix:
    counts: np.ndarray  # (C, C) int64, rows true, columns predicted
    class_names: list[str]

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        c = len(self.class_names)
        if self.counts.shape != (c, c):
            raise SchemaMismatch(f"counts shape {self.counts.shape} vs {c} class names")
        if (self.counts < 0).any():
            raise SchemaMismatch("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass
class EvalReport:
    accuracy: float
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    macro_f1: float
    confusion: ConfusionMatrix

    def per_class(self) -> dict[str, dict[str, float]]:
        return {
            name: {
                "precision": float(self.precision[i]),
                "recall": float(self.recall[i]),
                "f1": float(self.f1[i]),
            }
            for i, name in enumerate(self.confusion.class_names)
        }

    def to_json(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "macro_f1": self.macro_f1,
            "per_class": self.per_class(),
            "confusion": {
                "class_names": list(self.confusion.class_names),
                "counts": self.confusion.counts.tolist(),
            },
        }


@dataclass
class ContrastReport:
    """Same unit scored on a balanced test set and on the original one."""

    balanced: EvalReport
    original: EvalReport
    f1_delta: dict[str, float] = field(init=False)

    def __post_init__(self):
        names = self.balanced.confusion.class_names
        if names != self.original.confusion.class_names:
            raise SchemaMismatch("contrast reports must share one class vocabulary")
        self.f1_delta = {
            name: float(self.balanced.f1[i] - self.original.f1[i])
            for i, name in enumerate(names)
        }

    def to_json(self) -> dict:
        return {
            "balanced": self.balanced.to_json(),
            "original": self.original.to_json(),
            "f1_delta": self.f1_delta,
        }


def confusion(y_true, y_pred, class_names) -> ConfusionMatrix:
    """Count matrix with cell[i][j] = records of true class i predicted as j.

    class_names may be a list of names or a plain class count.
    """
    if isinstance(class_names, int):
        class_names = [str(i) for i in range(class_names)]
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape:
        raise LengthMismatch(f"{y_true.shape[0]} true vs {y_pred.shape[0]} predicted")
    c = len(class_names)
    if y_true.size and (
        y_true.min() < 0 or y_true.max() >= c or y_pred.min() < 0 or y_pred.max() >= c
    ):
        raise IndexOutOfRange(f"label index outside [0, {c})")
    counts = np.zeros((c, c), dtype=np.int64)
    np.add.at(counts, (y_true, y_pred), 1)
    return ConfusionMatrix(counts, list(class_names))


def metrics(cm: ConfusionMatrix) -> EvalReport:
    """Per-class one-vs-rest precision/recall/F1 plus overall accuracy."""
    counts = cm.counts.astype(np.float64)
    total = counts.sum()
    tp = np.diag(counts)
    fp = counts.sum(axis=0) - tp
    fn = counts.sum(axis=1) - tp
    with np.errstate(invalid="ignore", divide="ignore"):
        precision = np.where(tp + fp > 0, tp / (tp + fp), 0.0)
        recall = np.where(tp + fn > 0, tp / (tp + fn), 0.0)
        pr = precision + recall
        f1 = np.where(pr > 0, 2.0 * precision * recall / np.where(pr > 0, pr, 1.0), 0.0)
    accuracy = float(tp.sum() / total) if total > 0 else 0.0
    macro_f1 = float(f1.mean()) if f1.size else 0.0
    return EvalReport(accuracy, precision, recall, f1, macro_f1, cm)


def evaluate(model_or_bundle, test: FlowDataset, classes=None) -> EvalReport:
    """Score a unit or bundle on a test set.

    The test features must already be standardized the way the unit was
    trained. For a bare MlpModel, `classes` names the head's vocabulary
    (two names for a sigmoid unit); bundles carry their own schema.
    """
    from .pipelines import predict_labels  # local import avoids a cycle

    if len(test) == 0:
        raise EmptyDataset("cannot evaluate on an empty test set")
    if isinstance(model_or_bundle, MlpModel):
        if classes is None:
            raise SchemaMismatch("evaluating a bare model needs its class vocabulary")
        vocab = list(classes)
        idx_pred, _ = predict(model_or_bundle, test.features)
        labels_pred = [vocab[i] for i in idx_pred]
    else:
        bundle = model_or_bundle
        vocab = list(classes) if classes is not None else list(bundle.schema.classes)
        labels_pred = predict_labels(bundle, test.features)

    pos = {name: i for i, name in enumerate(vocab)}
    try:
        y_true = np.asarray([pos[lab] for lab in test.labels], dtype=np.int64)
        y_pred = np.asarray([pos[lab] for lab in labels_pred], dtype=np.int64)
    except KeyError as exc:
        raise SchemaMismatch(f"label {exc.args[0]!r} missing from the vocabulary") from exc
    return metrics(confusion(y_true, y_pred, vocab))


def contrast(
    model_or_bundle,
    balanced_test: FlowDataset,
    original_test: FlowDataset,
    classes=None,
) -> ContrastReport:
    """Evaluate the same unit on balanced and original-distribution tests."""
    return ContrastReport(
        balanced=evaluate(model_or_bundle, balanced_test, classes),
        original=evaluate(model_or_bundle, original_test, classes),
    )


# --- artifacts --------------------------------------------------------------

_RAMP_LOW = (247, 251, 255)
_RAMP_HIGH = (8, 48, 107)


def _ramp(v: float) -> str:
    r, g, b = (
        round(lo + (hi - lo) * v) for lo, hi in zip(_RAMP_LOW, _RAMP_HIGH)
    )
    return f"rgb({r},{g},{b})"


def render_heatmap(cm: ConfusionMatrix, sink=None, cell: int = 48) -> str:
    """Standalone SVG heat map: row-normalized color ramp, one annotated
    rect per cell, class names on both axes. Returns the SVG text and, when
    a sink is given, also writes it there."""
    c = len(cm.class_names)
    margin_left, margin_top = 110, 70
    width = margin_left + c * cell + 20
    height = margin_top + c * cell + 20
    row_sums = cm.counts.sum(axis=1)
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
    ]
    for i in range(c):
        for j in range(c):
            v = cm.counts[i, j] / row_sums[i] if row_sums[i] > 0 else 0.0
            x = margin_left + j * cell
            y = margin_top + i * cell
            lines.append(
                f'<rect class="cell" x="{x}" y="{y}" width="{cell}" height="{cell}" '
                f'fill="{_ramp(v)}" stroke="#cccccc"/>'
            )
            text_fill = "#ffffff" if v > 0.5 else "#000000"
            lines.append(
                f'<text x="{x + cell / 2:g}" y="{y + cell / 2:g}" text-anchor="middle" '
                f'dominant-baseline="central" font-size="11" fill="{text_fill}" '
                f'font-family="sans-serif">{int(cm.counts[i, j])}</text>'
            )
    for j, name in enumerate(cm.class_names):
        x = margin_left + j * cell + cell / 2
        lines.append(
            f'<text x="{x:g}" y="{margin_top - 8}" text-anchor="start" font-size="10" '
            f'font-family="sans-serif" transform="rotate(-45 {x:g} {margin_top - 8})">'
            f"{_svg_escape(name)}</text>"
        )
    for i, name in enumerate(cm.class_names):
        y = margin_top + i * cell + cell / 2
        lines.append(
            f'<text x="{margin_left - 8}" y="{y:g}" text-anchor="end" '
            f'dominant-baseline="central" font-size="10" font-family="sans-serif">'
            f"{_svg_escape(name)}</text>"
        )
    lines.append("</svg>")
    text = "\n".join(lines) + "\n"
    if sink is not None:
        if isinstance(sink, (str, Path)):
            Path(sink).write_text(text, encoding="utf-8")
        else:
            sink.write(text)
    return text


def _svg_escape(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def _confusion_csv(cm: ConfusionMatrix) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["true\\predicted"] + list(cm.class_names))
    for i, name in enumerate(cm.class_names):
        writer.writerow([name] + [int(x) for x in cm.counts[i]])
    return buf.getvalue()


def write_report(report: EvalReport | ContrastReport, sink: str | Path) -> list[Path]:
    """Write the report JSON (sorted keys) plus confusion CSV(s) alongside.

    Returns the written paths; the CSVs share the JSON's stem.
    """
    path = Path(sink)
    written: list[Path] = []
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(
            json.dumps(report.to_json(), sort_keys=True, indent=2) + "\n",
            encoding="utf-8",
        )
        written.append(path)
        if isinstance(report, ContrastReport):
            pairs = [
                ("balanced", report.balanced.confusion),
                ("original", report.original.confusion),
            ]
            for tag, cm in pairs:
                out = path.with_name(f"{path.stem}_confusion_{tag}.csv")
                out.write_text(_confusion_csv(cm), encoding="utf-8")
                written.append(out)
        else:
            out = path.with_name(f"{path.stem}_confusion.csv")
            out.write_text(_confusion_csv(report.confusion), encoding="utf-8")
            written.append(out)
    except OSError as exc:
        raise SinkUnwritable(f"cannot write report under {path}: {exc}") from exc
    return written
