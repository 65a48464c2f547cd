"""Hierarchical classifier topologies and their routing.

IDS1 stacks a binary benign/attack unit (BU) over two multi-class units:
flows flagged as attacks go to the attack-only classifier (AC), flows
flagged benign are re-checked by the benign-and-attack classifier (BAC),
whose verdict stands; that recovers attacks the binary unit missed.

IDS2 routes through a broad-category unit; terminal categories map straight
to their single class while the rest descend into per-category
sub-classifiers.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import ClassSchema, FlowDataset
from .errors import (
    CorruptModel,
    EmptyDataset,
    MissingSubModel,
    SchemaMismatch,
    ShapeMismatch,
)
from .ingest import ScalerParams, encode_labels
from .nnet import MlpModel, TrainConfig, TrainHistory, init_model, load_model, predict, save_model, train
from .resample import balance_to_level, categorize

BUNDLE_FORMAT_VERSION = 1

# label vocabulary of the declassified binary view; the sigmoid unit's
# positive class is Attack
BINARY_CLASSES = ("Benign", "Attack")

# categories answered directly by the IDS2 categorizer (no sub-classifier)
DEFAULT_TERMINAL_CATEGORIES = frozenset({"Benign", "DDoS", "PortScan"})

# manifest file-name slugs for the stock categories
_CATEGORY_SLUGS = {"DoS": "dos", "Bot": "bot", "Web Attack": "web", "Patator": "patator"}


@dataclass(frozen=True)
class CompositionInputs:
    """Unit accuracies fed to the composed-accuracy formulas."""

    bu_acc: float
    bac_acc: float
    au_acc: float = 0.0

    def __post_init__(self):
        for name in ("bu_acc", "bac_acc", "au_acc"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise SchemaMismatch(f"{name} must lie in [0, 1], got {v}")


@dataclass
class Ids1Bundle:
    bu: MlpModel  # sigmoid head, width 1
    bac: MlpModel  # softmax over all classes
    ac: MlpModel  # softmax over attack classes only
    schema: ClassSchema
    scaler: ScalerParams | None = None

    def __post_init__(self):
        if self.bu.output_width != 1 or self.bu.head != "sigmoid":
            raise SchemaMismatch("binary unit needs a width-1 sigmoid head")
        if self.bac.output_width != len(self.schema.classes):
            raise SchemaMismatch("benign-and-attack unit width must equal class count")
        if self.ac.output_width != len(self.schema.attack_classes):
            raise SchemaMismatch("attack unit width must equal attack-class count")


@dataclass
class Ids2Bundle:
    cat: MlpModel  # softmax over categories
    sub: dict[str, MlpModel]  # category -> sub-classifier
    schema: ClassSchema
    scaler: ScalerParams | None = None

    def __post_init__(self):
        cats = self.schema.routing_categories()
        if self.cat.output_width != len(cats):
            raise SchemaMismatch("categorizer width must equal category count")
        for name, model in self.sub.items():
            expected = len(self.schema.classes_in_category(name))
            if model.output_width != expected:
                raise SchemaMismatch(
                    f"sub-classifier for {name!r} has width {model.output_width}, "
                    f"category holds {expected} classes"
                )


@dataclass
class SingleBundle:
    """One trained unit plus the vocabulary it predicts over."""

    model: MlpModel
    schema: ClassSchema
    scaler: ScalerParams | None = None

    def __post_init__(self):
        expected = 1 if self.model.head == "sigmoid" else len(self.schema.classes)
        if self.model.head == "sigmoid" and len(self.schema.classes) != 2:
            raise SchemaMismatch("a sigmoid unit needs exactly 2 classes")
        if self.model.output_width != expected:
            raise SchemaMismatch("model width does not match the class vocabulary")


Bundle = Ids1Bundle | Ids2Bundle | SingleBundle


def _unit_seed(seed: int, tag: int) -> int:
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(tag,))
    return int(ss.generate_state(2, dtype=np.uint64)[0])


def _unit_config(config: TrainConfig, seed: int) -> TrainConfig:
    return TrainConfig(
        epochs=config.epochs,
        batch_size=config.batch_size,
        learning_rate=config.learning_rate,
        optimizer=config.optimizer,
        beta1=config.beta1,
        beta2=config.beta2,
        eps=config.eps,
        seed=seed,
        loss=config.loss if config.loss != "auto" else "auto",
    )


def train_unit(
    d: FlowDataset,
    classes: Sequence[str],
    head: str,
    config: TrainConfig,
    seed: int,
    hidden: Sequence[int],
    dropout_rate: float,
) -> tuple[MlpModel, TrainHistory]:
    if len(d) == 0:
        raise EmptyDataset("cannot train a unit on an empty dataset")
    vocab = ClassSchema(classes=tuple(classes))
    idx, onehot = encode_labels(d, vocab)
    if head == "sigmoid":
        if len(classes) != 2:
            raise SchemaMismatch("sigmoid unit needs exactly 2 classes")
        width = 1
        targets = idx.astype(np.float64)[:, None]
    else:
        width = len(classes)
        targets = onehot
    model = init_model(d.width, hidden, width, head, dropout_rate, seed)
    cfg = _unit_config(config, _unit_seed(seed, 7))
    model, history = train(model, d.features, targets, cfg)
    return model, history


def declassify_binary(d: FlowDataset, schema: ClassSchema) -> FlowDataset:
    """Collapse class labels to the Benign/Attack binary view."""
    if schema.benign_class is None:
        raise SchemaMismatch("schema does not name a benign class")
    labels = np.where(d.labels == schema.benign_class, BINARY_CLASSES[0], BINARY_CLASSES[1])
    binary_schema = ClassSchema(classes=BINARY_CLASSES, benign_class=BINARY_CLASSES[0])
    return FlowDataset(d.features, labels.astype(object), list(d.feature_names), binary_schema)


def train_ids1(
    balanced_binary: FlowDataset,
    balanced_multi: FlowDataset,
    balanced_attacks: FlowDataset,
    config: TrainConfig,
    schema: ClassSchema | None = None,
    hidden: Sequence[int] = (64, 32),
    dropout_rate: float = 0.2,
    scaler: ScalerParams | None = None,
) -> tuple[Ids1Bundle, dict[str, TrainHistory]]:
    """Train the three IDS1 units on their separately balanced views."""
    schema = schema or balanced_multi.schema
    if schema is None:
        raise SchemaMismatch("train_ids1 needs a class schema")
    for name, d in (
        ("binary", balanced_binary),
        ("multi-class", balanced_multi),
        ("attack-only", balanced_attacks),
    ):
        if d is None or len(d) == 0:
            raise EmptyDataset(f"{name} training set is missing or empty")

    bu, h_bu = train_unit(
        balanced_binary, BINARY_CLASSES, "sigmoid", config,
        _unit_seed(config.seed, 0), hidden, dropout_rate,
    )
    bac, h_bac = train_unit(
        balanced_multi, schema.classes, "softmax", config,
        _unit_seed(config.seed, 1), hidden, dropout_rate,
    )
    ac, h_ac = train_unit(
        balanced_attacks, schema.attack_classes, "softmax", config,
        _unit_seed(config.seed, 2), hidden, dropout_rate,
    )
    bundle = Ids1Bundle(bu, bac, ac, schema, scaler)
    return bundle, {"bu": h_bu, "bac": h_bac, "ac": h_ac}


def infer_ids1_batch(b: Ids1Bundle, flows: np.ndarray) -> list[str]:
    """Route standardized flows through BU, then AC or BAC.

    BU says attack: answer is AC's attack class. BU says benign: BAC's
    verdict stands: its benign answer confirms, any attack class overrides.
    """
    flows = np.asarray(flows, dtype=np.float64)
    if flows.ndim == 1:
        flows = flows[None, :]
    bu_idx, _ = predict(b.bu, flows)
    ac_idx, _ = predict(b.ac, flows)
    bac_idx, _ = predict(b.bac, flows)
    attack_names = b.schema.attack_classes
    out: list[str] = []
    for i in range(flows.shape[0]):
        if bu_idx[i] == 1:
            out.append(attack_names[ac_idx[i]])
        else:
            out.append(b.schema.classes[bac_idx[i]])
    return out


def infer_ids1(b: Ids1Bundle, flow: np.ndarray) -> str:
    return infer_ids1_batch(b, np.asarray(flow))[0]


def compose_ids1_detection(
    c: CompositionInputs, residual_weight: float = 0.01, clamp: bool = True
) -> float:
    """Composed benign-vs-attack accuracy: bu + bac * residual_weight.

    The stock residual weight is the printed constant 0.01; pass
    1 - c.bu_acc to let it float with the measured binary error instead.
    Values above 1 are clamped unless clamp=False.
    """
    raw = c.bu_acc + c.bac_acc * residual_weight
    return min(max(raw, 0.0), 1.0) if clamp else raw


def compose_ids1_subclass(
    c: CompositionInputs, residual_weight: float = 0.01, clamp: bool = True
) -> float:
    """Composed attack sub-class accuracy: bu*au + bu*bac*residual_weight."""
    raw = c.bu_acc * c.au_acc + c.bu_acc * c.bac_acc * residual_weight
    return min(max(raw, 0.0), 1.0) if clamp else raw


def train_ids2(
    d: FlowDataset,
    spec,
    config: TrainConfig,
    terminal: frozenset[str] | set[str] = DEFAULT_TERMINAL_CATEGORIES,
    hidden: Sequence[int] = (64, 32),
    dropout_rate: float = 0.2,
    scaler: ScalerParams | None = None,
) -> tuple[Ids2Bundle, dict[str, TrainHistory]]:
    """Train the categorizer on double-balanced data and one sub-classifier
    per non-terminal category on its level-1-balanced sub-class rows.

    `spec` is a resample.DoubleBalanceSpec.
    """
    schema = spec.schema or d.schema
    if schema is None:
        raise SchemaMismatch("train_ids2 needs a class schema")
    if not schema.categories:
        raise SchemaMismatch("schema has no category map")
    d = d.with_schema(schema)

    level1 = balance_to_level(d, spec.level1_plan())
    categorized = categorize(level1, schema)
    cat_schema = categorized.schema
    assert cat_schema is not None
    if spec.level2_targets:
        level2 = balance_to_level(categorized, spec.level2_plan())
    else:
        level2 = categorized

    histories: dict[str, TrainHistory] = {}
    cat_model, histories["cat"] = train_unit(
        level2, cat_schema.classes, "softmax", config,
        _unit_seed(config.seed, 10), hidden, dropout_rate,
    )

    sub: dict[str, MlpModel] = {}
    for j, category in enumerate(cat_schema.classes):
        if category in terminal:
            continue
        members = schema.classes_in_category(category)
        if not members:
            continue
        mask = np.isin(level1.labels.astype(str), members)
        rows = level1.select(mask)
        if len(rows) == 0:
            raise EmptyDataset(f"no training rows for category {category!r}")
        sub[category], histories[category] = train_unit(
            rows, members, "softmax", config,
            _unit_seed(config.seed, 100 + j), hidden, dropout_rate,
        )
    bundle = Ids2Bundle(cat_model, sub, schema, scaler)
    return bundle, histories


def infer_ids2_batch(b: Ids2Bundle, flows: np.ndarray) -> list[str]:
    """Categorize standardized flows, then descend into sub-classifiers.

    A category with a sub-classifier returns that model's sub-class; a
    terminal category resolves to its single class. A multi-class category
    with no loaded sub-model is an error.
    """
    flows = np.asarray(flows, dtype=np.float64)
    if flows.ndim == 1:
        flows = flows[None, :]
    cats = b.schema.routing_categories()
    cat_idx, _ = predict(b.cat, flows)
    sub_idx: dict[str, np.ndarray] = {}
    for name, model in b.sub.items():
        sub_idx[name], _ = predict(model, flows)
    out: list[str] = []
    for i in range(flows.shape[0]):
        category = cats[cat_idx[i]]
        members = b.schema.classes_in_category(category)
        if category in b.sub:
            out.append(members[sub_idx[category][i]])
        elif len(members) == 1:
            out.append(members[0])
        else:
            raise MissingSubModel(category)
    return out


def infer_ids2(b: Ids2Bundle, flow: np.ndarray) -> str:
    return infer_ids2_batch(b, np.asarray(flow))[0]


def predict_labels(bundle: Bundle, flows: np.ndarray) -> list[str]:
    """Predicted leaf labels for any bundle kind."""
    if isinstance(bundle, Ids1Bundle):
        return infer_ids1_batch(bundle, flows)
    if isinstance(bundle, Ids2Bundle):
        return infer_ids2_batch(bundle, flows)
    idx, _ = predict(bundle.model, flows)
    return [bundle.schema.classes[i] for i in idx]


def _slug(category: str) -> str:
    if category in _CATEGORY_SLUGS:
        return _CATEGORY_SLUGS[category]
    return "".join(ch if ch.isalnum() else "_" for ch in category.lower())


def save_bundle(bundle: Bundle, directory: str | Path) -> None:
    """Write bundle.json plus one model file per unit into a directory."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    units: dict[str, str] = {}
    models: dict[str, MlpModel] = {}
    if isinstance(bundle, Ids1Bundle):
        topology = "ids1"
        models = {"bu": bundle.bu, "bac": bundle.bac, "ac": bundle.ac}
        units = {name: f"{name}.json" for name in models}
        manifest_extra: dict = {}
    elif isinstance(bundle, Ids2Bundle):
        topology = "ids2"
        models["cat"] = bundle.cat
        units["cat"] = "cat.json"
        sub_entry: dict[str, str] = {}
        for category, model in bundle.sub.items():
            slug = _slug(category)
            models[slug] = model
            units[slug] = f"{slug}.json"
            sub_entry[category] = slug
        manifest_extra = {"sub_units": sub_entry}
    else:
        topology = "single"
        models = {"unit": bundle.model}
        units = {"unit": "unit.json"}
        manifest_extra = {}
    manifest = {
        "version": BUNDLE_FORMAT_VERSION,
        "topology": topology,
        "schema": bundle.schema.to_json(),
        "scaler": bundle.scaler.to_json() if bundle.scaler else None,
        "units": units,
        **manifest_extra,
    }
    for name, model in models.items():
        save_model(model, directory / units[name])
    (directory / "bundle.json").write_text(
        json.dumps(manifest, sort_keys=True) + "\n", encoding="utf-8"
    )


def load_bundle(directory: str | Path) -> Bundle:
    directory = Path(directory)
    manifest_path = directory / "bundle.json"
    if not manifest_path.exists():
        raise CorruptModel(f"no bundle.json under {directory}")
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CorruptModel(f"unreadable bundle manifest: {exc}") from exc
    if manifest.get("version") != BUNDLE_FORMAT_VERSION:
        raise CorruptModel(f"unsupported bundle version {manifest.get('version')!r}")
    schema = ClassSchema.from_json(manifest["schema"])
    scaler = ScalerParams.from_json(manifest["scaler"]) if manifest.get("scaler") else None
    units = manifest["units"]

    def unit(name: str) -> MlpModel:
        if name not in units:
            raise CorruptModel(f"manifest lacks unit {name!r}")
        return load_model(directory / units[name])

    topology = manifest.get("topology")
    if topology == "ids1":
        return Ids1Bundle(unit("bu"), unit("bac"), unit("ac"), schema, scaler)
    if topology == "ids2":
        sub = {
            category: unit(slug)
            for category, slug in manifest.get("sub_units", {}).items()
        }
        return Ids2Bundle(unit("cat"), sub, schema, scaler)
    if topology == "single":
        return SingleBundle(unit("unit"), schema, scaler)
    raise CorruptModel(f"unknown topology {topology!r}")
