"""Seeded Gaussian-cluster generator standing in for flow captures.

Each class is one spherical Gaussian cloud. The overlap_with knob plants a
class at another class's center so its points sit inside that cloud, the
geometry that makes interpolation-based oversampling give misleadingly high
balanced-test scores.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .data import ClassSchema, FlowDataset
from .errors import ValidationError

# default center spacing keeps non-overlapping classes well separated at
# unit covariance
_SPACING = 6.0


@dataclass(frozen=True)
class SynthClass:
    name: str
    proportion: float | None = None
    count: int | None = None
    center: tuple[float, ...] | None = None
    scale: float = 1.0
    overlap_with: str | None = None

    def __post_init__(self):
        if (self.proportion is None) == (self.count is None):
            raise ValidationError(
                f"class {self.name!r}: give exactly one of proportion or count"
            )
        if self.proportion is not None and not 0.0 < self.proportion <= 1.0:
            raise ValidationError(f"class {self.name!r}: proportion must lie in (0, 1]")
        if self.count is not None and self.count < 1:
            raise ValidationError(f"class {self.name!r}: count must be >= 1")
        if self.scale <= 0.0:
            raise ValidationError(f"class {self.name!r}: scale must be > 0")


@dataclass(frozen=True)
class SynthSpec:
    classes: tuple[SynthClass, ...]
    total: int
    feature_width: int
    seed: int = 0

    def __post_init__(self):
        if self.total < 1:
            raise ValidationError("total must be >= 1")
        if self.feature_width < 1:
            raise ValidationError("feature_width must be >= 1")
        names = [c.name for c in self.classes]
        if len(set(names)) != len(names):
            raise ValidationError("duplicate class names in spec")
        props = [c.proportion for c in self.classes if c.proportion is not None]
        if props and all(c.proportion is not None for c in self.classes):
            if abs(sum(props) - 1.0) > 1e-6:
                raise ValidationError(f"proportions sum to {sum(props)}, expected 1")
        elif props and sum(props) > 1.0 + 1e-9:
            raise ValidationError("proportions exceed 1 alongside absolute counts")

    def to_json(self) -> dict:
        return {
            "total": self.total,
            "feature_width": self.feature_width,
            "seed": self.seed,
            "classes": [
                {
                    "name": c.name,
                    "proportion": c.proportion,
                    "count": c.count,
                    "center": list(c.center) if c.center is not None else None,
                    "scale": c.scale,
                    "overlap_with": c.overlap_with,
                }
                for c in self.classes
            ],
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "SynthSpec":
        classes = tuple(
            SynthClass(
                name=str(c["name"]),
                proportion=c.get("proportion"),
                count=c.get("count"),
                center=tuple(c["center"]) if c.get("center") else None,
                scale=float(c.get("scale", 1.0)),
                overlap_with=c.get("overlap_with"),
            )
            for c in obj["classes"]
        )
        return cls(
            classes=classes,
            total=int(obj["total"]),
            feature_width=int(obj["feature_width"]),
            seed=int(obj.get("seed", 0)),
        )


def resolve_counts(spec: SynthSpec) -> dict[str, int]:
    """Absolute counts are honored; proportional classes share round(p*total)
    by largest remainder. Every resolved count must be >= 1."""
    counts: dict[str, int] = {}
    prop_classes = [c for c in spec.classes if c.proportion is not None]
    for c in spec.classes:
        if c.count is not None:
            counts[c.name] = c.count
    if prop_classes:
        exact = [c.proportion * spec.total for c in prop_classes]
        goal = int(round(sum(exact)))
        base = [int(np.floor(e)) for e in exact]
        remainders = [e - b for e, b in zip(exact, base)]
        leftover = goal - sum(base)
        order = sorted(range(len(prop_classes)), key=lambda i: (-remainders[i], i))
        for i in order[:leftover]:
            base[i] += 1
        for c, n in zip(prop_classes, base):
            counts[c.name] = n
    for name, n in counts.items():
        if n < 1:
            raise ValidationError(f"class {name!r} rounds to zero records")
    return counts


def _resolve_centers(spec: SynthSpec) -> dict[str, np.ndarray]:
    centers: dict[str, np.ndarray] = {}
    d = spec.feature_width
    for i, c in enumerate(spec.classes):
        if c.center is not None:
            if len(c.center) != d:
                raise ValidationError(
                    f"class {c.name!r}: center has {len(c.center)} coords, expected {d}"
                )
            centers[c.name] = np.asarray(c.center, dtype=np.float64)
        elif c.overlap_with is None:
            v = np.zeros(d)
            v[i % d] = _SPACING * (1 + i // d)
            centers[c.name] = v
    for c in spec.classes:
        if c.overlap_with is not None and c.center is None:
            if c.overlap_with not in centers:
                raise ValidationError(
                    f"class {c.name!r} overlaps with unknown or unresolved "
                    f"class {c.overlap_with!r}"
                )
            centers[c.name] = centers[c.overlap_with].copy()
    return centers


def generate(spec: SynthSpec) -> FlowDataset:
    """Deterministic dataset of Gaussian class clouds, one block per class."""
    counts = resolve_counts(spec)
    centers = _resolve_centers(spec)
    rng = np.random.default_rng(spec.seed)
    blocks: list[np.ndarray] = []
    labels: list[str] = []
    for c in spec.classes:
        n = counts[c.name]
        pts = centers[c.name] + c.scale * rng.standard_normal((n, spec.feature_width))
        blocks.append(pts)
        labels.extend([c.name] * n)
    feature_names = [f"f{i:02d}" for i in range(spec.feature_width)]
    schema = ClassSchema(
        classes=tuple(c.name for c in spec.classes),
        feature_width=spec.feature_width,
        benign_class=spec.classes[0].name,
    )
    return FlowDataset(
        np.concatenate(blocks, axis=0),
        np.asarray(labels, dtype=object),
        feature_names,
        schema,
    )


def blobs(
    counts: Mapping[str, int],
    centers: Mapping[str, Sequence[float]],
    scale: float = 1.0,
    seed: int = 0,
) -> FlowDataset:
    """Shorthand for tests: labeled Gaussian blobs at explicit centers."""
    names = list(counts)
    width = len(next(iter(centers.values())))
    spec = SynthSpec(
        classes=tuple(
            SynthClass(name=n, count=counts[n], center=tuple(centers[n]), scale=scale)
            for n in names
        ),
        total=sum(counts.values()),
        feature_width=width,
        seed=seed,
    )
    return generate(spec)
