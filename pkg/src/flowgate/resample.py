"""Class rebalancing: SMOTE oversampling, random undersampling, ENN cleaning,
categorization, and the two-level balancing used by the categorized topology.

All samplers are bit-deterministic under a fixed seed. Per-class random
streams are derived from (seed, class-index) so processing order can never
change the output.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .data import ClassSchema, FlowDataset
from .errors import (
    InvalidPlan,
    KTooLarge,
    TargetAboveCurrent,
    TargetBelowCurrent,
    TooFewSamples,
    UnmappedClass,
)

DEFAULT_K_NEIGHBORS = 5


@dataclass(frozen=True)
class ResamplingPlan:
    """Per-class target counts for one balancing level.

    clamp_k permits oversampling classes with at most k records by shrinking
    k to n-1 for that class (with a warning) instead of failing.
    """

    targets: Mapping[str, int]
    k_neighbors: int = DEFAULT_K_NEIGHBORS
    seed: int = 0
    clamp_k: bool = False

    def validate(self, counts: Mapping[str, int]) -> None:
        if self.k_neighbors < 1:
            raise InvalidPlan("k_neighbors must be >= 1")
        for name, target in self.targets.items():
            if target <= 0:
                raise InvalidPlan(f"target for class {name!r} must be > 0, got {target}")
        if self.clamp_k:
            return
        oversampled = [
            name
            for name, target in self.targets.items()
            if name in counts and target > counts[name]
        ]
        for name in oversampled:
            if self.k_neighbors >= counts[name]:
                raise InvalidPlan(
                    f"k_neighbors={self.k_neighbors} >= {counts[name]} records of "
                    f"oversampled class {name!r} (pass clamp_k to shrink k)"
                )

    def to_json(self) -> dict:
        return {
            "targets": dict(self.targets),
            "k_neighbors": self.k_neighbors,
            "seed": self.seed,
            "clamp_k": self.clamp_k,
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "ResamplingPlan":
        return cls(
            targets={str(k): int(v) for k, v in obj["targets"].items()},
            k_neighbors=int(obj.get("k_neighbors", DEFAULT_K_NEIGHBORS)),
            seed=int(obj.get("seed", 0)),
            clamp_k=bool(obj.get("clamp_k", False)),
        )


@dataclass(frozen=True)
class DoubleBalanceSpec:
    """Two-level balancing: sub-classes first, then broad categories.

    level1_targets is keyed by sub-class name; sub-classes left out are
    passed through untouched (that is how per-category level-1 balancing is
    skipped). level2_targets is keyed by category name and runs on the
    categorized label space produced after level-1.
    """

    level1_targets: Mapping[str, int] = field(default_factory=dict)
    level2_targets: Mapping[str, int] = field(default_factory=dict)
    schema: ClassSchema | None = None
    k_neighbors: int = DEFAULT_K_NEIGHBORS
    seed: int = 0
    clamp_k: bool = False

    def level1_plan(self) -> ResamplingPlan:
        return ResamplingPlan(self.level1_targets, self.k_neighbors, self.seed, self.clamp_k)

    def level2_plan(self) -> ResamplingPlan:
        return ResamplingPlan(self.level2_targets, self.k_neighbors, self.seed, self.clamp_k)

    def to_json(self) -> dict:
        return {
            "level1_targets": dict(self.level1_targets),
            "level2_targets": dict(self.level2_targets),
            "schema": self.schema.to_json() if self.schema else None,
            "k_neighbors": self.k_neighbors,
            "seed": self.seed,
            "clamp_k": self.clamp_k,
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "DoubleBalanceSpec":
        return cls(
            level1_targets={str(k): int(v) for k, v in obj.get("level1_targets", {}).items()},
            level2_targets={str(k): int(v) for k, v in obj.get("level2_targets", {}).items()},
            schema=ClassSchema.from_json(obj["schema"]) if obj.get("schema") else None,
            k_neighbors=int(obj.get("k_neighbors", DEFAULT_K_NEIGHBORS)),
            seed=int(obj.get("seed", 0)),
            clamp_k=bool(obj.get("clamp_k", False)),
        )


def knn_indices(points: np.ndarray, k: int, chunk: int = 512) -> np.ndarray:
    """Indices of the k nearest Euclidean neighbors of every point.

    A point is never its own neighbor. Each row is sorted by ascending
    distance with ties broken by ascending index (stable sort), which keeps
    results identical across runs.
    """
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    if k >= n:
        raise KTooLarge(f"k={k} but only {n} points")
    if k < 1:
        raise KTooLarge("k must be >= 1")
    sq = np.einsum("ij,ij->i", points, points)
    out = np.empty((n, k), dtype=np.int64)
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        block = points[start:stop]
        d2 = sq[start:stop, None] + sq[None, :] - 2.0 * block @ points.T
        np.maximum(d2, 0.0, out=d2)
        d2[np.arange(start, stop) - start, np.arange(start, stop)] = np.inf
        order = np.argsort(d2, axis=1, kind="stable")
        out[start:stop] = order[:, :k]
    return out


def smote_oversample(
    class_points: np.ndarray, target: int, k: int = DEFAULT_K_NEIGHBORS, seed: int = 0
) -> np.ndarray:
    """Grow one class to `target` rows by neighbor interpolation.

    Output keeps all originals first, followed by target - n synthetic rows.
    Each synthetic row is x + u * (x' - x) for a uniformly chosen original x,
    one of its k nearest same-class neighbors x', and u ~ Uniform[0, 1].
    """
    pts = np.asarray(class_points, dtype=np.float64)
    n = pts.shape[0]
    if target < n:
        raise TargetBelowCurrent(f"target {target} below current count {n}")
    if n < 2:
        raise TooFewSamples("need at least 2 records to interpolate")
    if k >= n:
        raise KTooLarge(f"k={k} but class has {n} records")
    if target == n:
        return pts.copy()
    neighbors = knn_indices(pts, k)
    rng = np.random.default_rng(seed)
    n_new = target - n
    base = rng.integers(0, n, size=n_new)
    pick = rng.integers(0, k, size=n_new)
    u = rng.random(n_new)
    x = pts[base]
    x_nbr = pts[neighbors[base, pick]]
    synth = x + u[:, None] * (x_nbr - x)
    return np.concatenate([pts, synth], axis=0)


def random_undersample(class_points: np.ndarray, target: int, seed: int = 0) -> np.ndarray:
    """Uniform sample without replacement down to `target` rows.

    Kept rows stay in their original relative order.
    """
    pts = np.asarray(class_points, dtype=np.float64)
    n = pts.shape[0]
    if target > n:
        raise TargetAboveCurrent(f"target {target} above current count {n}")
    if target == n:
        return pts.copy()
    rng = np.random.default_rng(seed)
    keep = np.sort(rng.choice(n, size=target, replace=False))
    return pts[keep]


def _class_seed(seed: int, class_index: int) -> int:
    """Independent per-class stream seed derived from (seed, class-index)."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(class_index,))
    return int(ss.generate_state(2, dtype=np.uint64)[0])


def balance_to_level(d: FlowDataset, plan: ResamplingPlan) -> FlowDataset:
    """Resample every targeted class to exactly its planned count.

    Classes above target are randomly undersampled, classes below are
    SMOTE-oversampled, classes at target (or absent from the plan) pass
    through untouched. Output is grouped by class in first-appearance order,
    originals before synthetics.
    """
    counts = d.class_counts()
    plan.validate(counts)
    unknown = set(plan.targets) - set(counts)
    if unknown:
        raise InvalidPlan(f"plan targets classes absent from the dataset: {sorted(unknown)}")

    class_order = list(counts)
    if d.schema is not None:
        index_of = {name: i for i, name in enumerate(d.schema.classes)}
    else:
        index_of = {name: i for i, name in enumerate(sorted(counts))}

    blocks: list[np.ndarray] = []
    labels: list[str] = []
    for name in class_order:
        mask = d.labels == name
        pts = d.features[mask]
        target = plan.targets.get(name, pts.shape[0])
        rng_seed = _class_seed(plan.seed, index_of.get(name, len(index_of)))
        if target == pts.shape[0]:
            out = pts.copy()
        elif target < pts.shape[0]:
            out = random_undersample(pts, target, rng_seed)
        else:
            k = plan.k_neighbors
            if k >= pts.shape[0]:
                if not plan.clamp_k:
                    raise KTooLarge(
                        f"k={k} but class {name!r} has {pts.shape[0]} records"
                    )
                k = pts.shape[0] - 1
                warnings.warn(
                    f"class {name!r}: clamped k_neighbors to {k} (only {pts.shape[0]} records)",
                    stacklevel=2,
                )
            out = smote_oversample(pts, target, k, rng_seed)
        blocks.append(out)
        labels.extend([name] * out.shape[0])
    features = (
        np.concatenate(blocks, axis=0)
        if blocks
        else np.empty((0, d.width), dtype=np.float64)
    )
    return FlowDataset(features, np.asarray(labels, dtype=object), list(d.feature_names), d.schema)


def enn_clean(d: FlowDataset, k: int = 3) -> FlowDataset:
    """Edited-nearest-neighbor cleaning.

    Removes every record whose label disagrees with the strict majority label
    (more than k/2 occurrences) of its k nearest neighbors; records whose
    neighborhood has no strict majority are kept. Neighborhoods are computed
    once on the original dataset; survivors keep their original order.
    """
    n = len(d)
    if k < 1 or k >= n:
        raise KTooLarge(f"k={k} must satisfy 1 <= k < {n}")
    neighbors = knn_indices(d.features, k)
    keep = np.ones(n, dtype=bool)
    for i in range(n):
        votes: dict[str, int] = {}
        for j in neighbors[i]:
            lab = d.labels[j]
            votes[lab] = votes.get(lab, 0) + 1
        majority = max(votes.items(), key=lambda kv: kv[1])
        if majority[1] * 2 > k and majority[0] != d.labels[i]:
            keep[i] = False
    return d.select(keep)


def categorize(d: FlowDataset, schema: ClassSchema) -> FlowDataset:
    """Rewrite class labels to their broad categories.

    Classes outside the category map follow schema.unmapped_policy: raise,
    drop the records, or keep the class name as its own category. The result
    carries a derived schema whose classes are the category names.
    """
    mapped: list[str] = []
    keep = np.ones(len(d), dtype=bool)
    extra: dict[str, None] = {}
    for i, lab in enumerate(d.labels):
        if lab in schema.categories:
            mapped.append(schema.categories[lab])
        elif schema.unmapped_policy == "error":
            raise UnmappedClass(lab)
        elif schema.unmapped_policy == "drop":
            keep[i] = False
            mapped.append("")
        else:  # own-category
            extra.setdefault(lab)
            mapped.append(lab)

    base = schema.routing_categories()
    cat_names = list(base) + [c for c in extra if c not in base]
    benign_cat = (
        schema.categories.get(schema.benign_class) if schema.benign_class is not None else None
    )
    derived = ClassSchema(
        classes=tuple(cat_names),
        unmapped_policy=schema.unmapped_policy,
        feature_width=schema.feature_width,
        benign_class=benign_cat if benign_cat in cat_names else None,
    )
    out = FlowDataset(d.features, np.asarray(mapped, dtype=object), list(d.feature_names), derived)
    return out.select(keep) if not keep.all() else out


def double_balance(d: FlowDataset, spec: DoubleBalanceSpec) -> FlowDataset:
    """Level-1 balance sub-classes, categorize, then level-2 balance categories."""
    schema = spec.schema or d.schema
    if schema is None:
        raise InvalidPlan("double_balance needs a schema (on the spec or the dataset)")
    level1 = balance_to_level(d.with_schema(schema), spec.level1_plan())
    categorized = categorize(level1, schema)
    if not spec.level2_targets:
        return categorized
    return balance_to_level(categorized, spec.level2_plan())
