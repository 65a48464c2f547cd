"""Shared independent oracles and tiny dataset builders.

Every oracle here is deliberately brute-force (python loops over raw
arrays) so it stays independent of the vectorized implementation paths it
checks.
"""
from __future__ import annotations

import numpy as np
import pytest

from flowgate.data import ClassSchema, FlowDataset


def brute_force_knn(points: np.ndarray, k: int) -> list[list[int]]:
    """All-pairs distances, sorted by (distance, index), self excluded."""
    points = np.asarray(points, dtype=np.float64)
    n = len(points)
    out = []
    for i in range(n):
        cands = []
        for j in range(n):
            if j == i:
                continue
            diff = points[i] - points[j]
            cands.append((float(np.sqrt((diff * diff).sum())), j))
        cands.sort()
        out.append([j for _, j in cands[:k]])
    return out


def recount_metrics(y_true, y_pred, c: int) -> dict:
    """Re-derive TP/FP/FN/TN and the ratio metrics straight from label pairs."""
    y_true = list(y_true)
    y_pred = list(y_pred)
    per_class = []
    correct = sum(1 for t, p in zip(y_true, y_pred) if t == p)
    for cls in range(c):
        tp = fp = fn = tn = 0
        for t, p in zip(y_true, y_pred):
            if t == cls and p == cls:
                tp += 1
            elif t != cls and p == cls:
                fp += 1
            elif t == cls and p != cls:
                fn += 1
            else:
                tn += 1
        precision = tp / (tp + fp) if tp + fp > 0 else 0.0
        recall = tp / (tp + fn) if tp + fn > 0 else 0.0
        f1 = (
            2 * precision * recall / (precision + recall)
            if precision + recall > 0
            else 0.0
        )
        per_class.append(
            {"tp": tp, "fp": fp, "fn": fn, "tn": tn,
             "precision": precision, "recall": recall, "f1": f1}
        )
    accuracy = correct / len(y_true) if y_true else 0.0
    return {"accuracy": accuracy, "per_class": per_class}


def segment_residual(s: np.ndarray, a: np.ndarray, b: np.ndarray) -> tuple[float, float]:
    """Distance from s to the segment a->b plus the projection parameter u."""
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return float(np.linalg.norm(s - a)), 0.0
    u = float((s - a) @ ab) / denom
    closest = a + u * ab
    return float(np.linalg.norm(s - closest)), u


def synthetic_is_interpolation(
    s: np.ndarray, originals: np.ndarray, neighbor_lists, tol: float = 1e-9
) -> bool:
    """True when s lies on some segment between an original point and one of
    its k nearest neighbors, with 0 <= u <= 1."""
    for i in range(len(originals)):
        for j in neighbor_lists[i]:
            resid, u = segment_residual(s, originals[i], originals[j])
            if resid < tol and -tol <= u <= 1 + tol:
                return True
    return False


def make_dataset(features, labels, schema: ClassSchema | None = None) -> FlowDataset:
    features = np.asarray(features, dtype=np.float64)
    names = [f"f{i:02d}" for i in range(features.shape[1])]
    return FlowDataset(features, np.asarray(labels, dtype=object), names, schema)


@pytest.fixture
def two_class_blobs():
    from flowgate.synth import blobs

    return blobs(
        {"neg": 120, "pos": 80},
        {"neg": [0.0, 0.0], "pos": [6.0, 6.0]},
        scale=1.0,
        seed=42,
    )
