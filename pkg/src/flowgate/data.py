"""Core data containers: flow records, datasets, and class schemas.

A FlowDataset is array-backed (one float64 feature matrix plus a parallel
label vector) so every downstream stage can work on numpy views instead of
per-record objects. FlowRecord is the row-level view used at the edges.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterator, Mapping, Sequence

import numpy as np

from .errors import SchemaMismatch, UnknownLabel

# unmapped_policy values accepted by ClassSchema
UNMAPPED_POLICIES = ("error", "drop", "own-category")


@dataclass(frozen=True)
class ClassSchema:
    """Class vocabulary plus the category mapping used by hierarchical models.

    classes are ordered: one-hot position == index in `classes`.
    categories maps a class name to its broad category; classes left out of
    the map are handled per `unmapped_policy` when categorizing.
    """

    classes: tuple[str, ...]
    categories: Mapping[str, str] = field(default_factory=dict)
    unmapped_policy: str = "drop"
    feature_width: int | None = None
    benign_class: str | None = None

    def __post_init__(self):
        if len(set(self.classes)) != len(self.classes):
            raise SchemaMismatch("duplicate class names in schema")
        if self.unmapped_policy not in UNMAPPED_POLICIES:
            raise SchemaMismatch(
                f"unmapped_policy must be one of {UNMAPPED_POLICIES}, "
                f"got {self.unmapped_policy!r}"
            )
        unknown = set(self.categories) - set(self.classes)
        if unknown:
            raise SchemaMismatch(f"category map covers unknown classes: {sorted(unknown)}")
        if self.benign_class is not None and self.benign_class not in self.classes:
            raise SchemaMismatch(f"benign class {self.benign_class!r} not in classes")

    def index_of(self, label: str) -> int:
        try:
            return self.classes.index(label)
        except ValueError:
            raise UnknownLabel(label) from None

    @property
    def attack_classes(self) -> tuple[str, ...]:
        """Every class except the benign one, in schema order."""
        return tuple(c for c in self.classes if c != self.benign_class)

    @property
    def category_names(self) -> tuple[str, ...]:
        """Category vocabulary in sorted order.

        Sorted so the order survives JSON round-trips regardless of how the
        mapping was written; for the stock CICIDS-2017 map this is Benign,
        Bot, DDoS, DoS, Patator, PortScan, Web Attack.
        """
        return tuple(sorted(set(self.categories.values())))

    def classes_in_category(self, category: str) -> tuple[str, ...]:
        members = tuple(c for c in self.classes if self.categories.get(c) == category)
        if (
            not members
            and self.unmapped_policy == "own-category"
            and category in self.classes
            and category not in self.categories
        ):
            return (category,)
        return members

    def routing_categories(self) -> tuple[str, ...]:
        """Full category vocabulary a categorizer predicts over.

        Under the own-category policy, unmapped classes become their own
        trailing categories; otherwise this equals category_names.
        """
        cats = list(self.category_names)
        if self.unmapped_policy == "own-category":
            for c in self.classes:
                if c not in self.categories and c not in cats:
                    cats.append(c)
        return tuple(cats)

    def to_json(self) -> dict:
        return {
            "classes": list(self.classes),
            "categories": dict(self.categories),
            "unmapped_policy": self.unmapped_policy,
            "feature_width": self.feature_width,
            "benign_class": self.benign_class,
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "ClassSchema":
        return cls(
            classes=tuple(obj["classes"]),
            categories=dict(obj.get("categories", {})),
            unmapped_policy=obj.get("unmapped_policy", "drop"),
            feature_width=obj.get("feature_width"),
            benign_class=obj.get("benign_class"),
        )


@dataclass(frozen=True)
class FlowRecord:
    """One network flow: a fixed-width feature vector and its class name."""

    features: np.ndarray
    label: str


@dataclass
class FlowDataset:
    """Ordered collection of flows sharing one feature schema."""

    features: np.ndarray  # (n, width) float64
    labels: np.ndarray  # (n,) object dtype holding str
    feature_names: list[str]
    schema: ClassSchema | None = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2:
            raise SchemaMismatch("feature matrix must be 2-D")
        self.labels = np.asarray(self.labels, dtype=object)
        if self.labels.shape != (self.features.shape[0],):
            raise SchemaMismatch("labels length must equal record count")
        if len(self.feature_names) != self.features.shape[1]:
            raise SchemaMismatch(
                f"{len(self.feature_names)} feature names for width {self.features.shape[1]}"
            )

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def width(self) -> int:
        return self.features.shape[1]

    def records(self) -> Iterator[FlowRecord]:
        for i in range(len(self)):
            yield FlowRecord(self.features[i], str(self.labels[i]))

    def class_counts(self) -> dict[str, int]:
        """Per-class record counts, keyed by label, in first-appearance order."""
        counts: dict[str, int] = {}
        for lab in self.labels:
            counts[lab] = counts.get(lab, 0) + 1
        return counts

    def select(self, index) -> "FlowDataset":
        """New dataset holding the rows picked by a boolean mask or index array."""
        return FlowDataset(
            self.features[index].copy(),
            self.labels[index].copy(),
            list(self.feature_names),
            self.schema,
        )

    def with_labels(self, labels: Sequence[str], schema: ClassSchema | None = None) -> "FlowDataset":
        return FlowDataset(self.features, np.asarray(labels, dtype=object), list(self.feature_names), schema)

    def with_schema(self, schema: ClassSchema) -> "FlowDataset":
        return replace(self, schema=schema)


# CICIDS-2017 vocabulary: 15 classes, 7 broad categories. Heartbleed and
# Infiltration have no category; the default policy drops them when
# categorizing (configurable via unmapped_policy).
CICIDS2017_CLASSES = (
    "BENIGN",
    "Bot",
    "DDoS",
    "DoS GoldenEye",
    "DoS Hulk",
    "DoS Slowhttptest",
    "DoS slowloris",
    "FTP-Patator",
    "Heartbleed",
    "Infiltration",
    "PortScan",
    "SSH-Patator",
    "Web Attack - Brute Force",
    "Web Attack - Sql Injection",
    "Web Attack - XSS",
)

CICIDS2017_CATEGORIES = {
    "BENIGN": "Benign",
    "Bot": "Bot",
    "DDoS": "DDoS",
    "DoS GoldenEye": "DoS",
    "DoS Hulk": "DoS",
    "DoS Slowhttptest": "DoS",
    "DoS slowloris": "DoS",
    "FTP-Patator": "Patator",
    "SSH-Patator": "Patator",
    "PortScan": "PortScan",
    "Web Attack - Brute Force": "Web Attack",
    "Web Attack - Sql Injection": "Web Attack",
    "Web Attack - XSS": "Web Attack",
}


def cicids2017_schema(unmapped_policy: str = "drop") -> ClassSchema:
    """The stock CICIDS-2017 schema: 78 features, 15 classes, 7 categories."""
    return ClassSchema(
        classes=CICIDS2017_CLASSES,
        categories=CICIDS2017_CATEGORIES,
        unmapped_policy=unmapped_policy,
        feature_width=78,
        benign_class="BENIGN",
    )
