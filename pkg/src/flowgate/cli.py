"""Command-line entry point: synth, ingest, balance, train, evaluate.

Exit codes are a stable scripting contract: 0 success, 2 usage or
validation failure, 3 runtime or training failure. Every run writes a
run.json with the fully resolved config (seeds included); feeding that file
back through --config reproduces the artifacts byte for byte.

FLOWGATE_THREADS caps numeric-library parallelism; it must be applied
before numpy loads, which is why the heavy imports happen inside main().
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

_THREAD_ENV_TARGETS = (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
)


def _apply_thread_cap() -> None:
    cap = os.environ.get("FLOWGATE_THREADS")
    if not cap:
        return
    for name in _THREAD_ENV_TARGETS:
        os.environ.setdefault(name, cap)


def _load_config(path: str | Path) -> dict:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise _usage(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise _usage(f"config file {path} is not valid JSON: {exc}")
    # accept a previous run.json verbatim
    if isinstance(obj, dict) and set(obj) == {"command", "config"}:
        obj = obj["config"]
    if not isinstance(obj, dict):
        raise _usage(f"config file {path} must hold a JSON object")
    return obj


def _usage(message: str):
    from .errors import ValidationError

    return ValidationError(message)


def _write_run_json(out_dir: Path, command: str, config: dict) -> None:
    payload = {"command": command, "config": config}
    (out_dir / "run.json").write_text(
        json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )


def _resolve_schema(value):
    from .data import ClassSchema, cicids2017_schema

    if value is None:
        return None
    if value == "cicids2017":
        return cicids2017_schema()
    if isinstance(value, dict):
        return ClassSchema.from_json(value)
    raise _usage(f"schema must be null, \"cicids2017\", or an object, got {value!r}")


def _require_inputs(paths) -> None:
    missing = [str(p) for p in paths if not Path(p).exists()]
    if missing:
        raise _usage(f"input file(s) not found: {', '.join(missing)}")


def _json_text(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


# --- synth ------------------------------------------------------------------

def cmd_synth(config: dict, out_dir: Path) -> None:
    from .ingest import write_csv
    from .synth import SynthSpec, generate, resolve_counts

    spec = SynthSpec.from_json(config)
    dataset = generate(spec)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_csv(dataset, out_dir / "synth.csv")
    counts = resolve_counts(spec)
    (out_dir / "counts.json").write_text(_json_text(counts), encoding="utf-8")
    _write_run_json(out_dir, "synth", spec.to_json())
    print(f"wrote {out_dir / 'synth.csv'} ({len(dataset)} rows)")


# --- ingest -----------------------------------------------------------------

def cmd_ingest(config: dict, out_dir: Path) -> None:
    from .ingest import clean, merge, parse_csv, write_csv

    inputs = config.get("inputs")
    if not inputs:
        raise _usage("ingest config needs a non-empty \"inputs\" list")
    _require_inputs(inputs)
    schema = _resolve_schema(config.get("schema"))

    datasets = [parse_csv(p, schema) for p in inputs]
    merged = merge(datasets)
    cleaned, removed = clean(merged)

    out_dir.mkdir(parents=True, exist_ok=True)
    write_csv(cleaned, out_dir / "cleaned.csv")
    counts = cleaned.class_counts()
    summary = {
        "rows_in": len(merged),
        "rows_out": len(cleaned),
        "removed": removed,
        "class_counts": counts,
        "feature_width": cleaned.width,
    }
    (out_dir / "summary.json").write_text(_json_text(summary), encoding="utf-8")
    with open(out_dir / "class_counts.csv", "w", encoding="utf-8", newline="") as fh:
        fh.write("class,count\n")
        for name in sorted(counts):
            fh.write(f"{name},{counts[name]}\n")
    _write_run_json(out_dir, "ingest", dict(config))
    print(f"wrote {out_dir / 'cleaned.csv'} ({len(cleaned)} rows, {removed} removed)")


# --- balance ----------------------------------------------------------------

def cmd_balance(config: dict, out_dir: Path) -> None:
    from .ingest import parse_csv, write_csv
    from .resample import DoubleBalanceSpec, ResamplingPlan, balance_to_level, double_balance

    source = config.get("input")
    if not source:
        raise _usage("balance config needs an \"input\" path")
    _require_inputs([source])
    schema = _resolve_schema(config.get("schema"))
    dataset = parse_csv(source, schema)
    before = dataset.class_counts()

    if "double_balance" in config:
        section = dict(config["double_balance"])
        section.setdefault("seed", config.get("seed", 0))
        spec = DoubleBalanceSpec.from_json(section)
        if spec.schema is None and schema is not None:
            spec = DoubleBalanceSpec(
                spec.level1_targets, spec.level2_targets, schema,
                spec.k_neighbors, spec.seed, spec.clamp_k,
            )
        balanced = double_balance(dataset, spec)
    elif "plan" in config:
        section = dict(config["plan"])
        section.setdefault("seed", config.get("seed", 0))
        plan = ResamplingPlan.from_json(section)
        balanced = balance_to_level(dataset, plan)
    else:
        raise _usage("balance config needs a \"plan\" or a \"double_balance\" section")

    out_dir.mkdir(parents=True, exist_ok=True)
    write_csv(balanced, out_dir / "balanced.csv")
    payload = {"before": before, "after": balanced.class_counts()}
    (out_dir / "counts.json").write_text(_json_text(payload), encoding="utf-8")
    _write_run_json(out_dir, "balance", dict(config))
    print(f"wrote {out_dir / 'balanced.csv'} ({len(balanced)} rows)")


# --- train ------------------------------------------------------------------

TOPOLOGIES = ("single-unit", "ids1", "ids2")
ORDER_CHOICES = ("balance_then_split", "split_then_balance")


STANDARDIZE_STAGES = ("after_balance", "before_balance")


@dataclass
class RunConfig:
    """Resolved training-run configuration."""

    input: str
    topology: str = "single-unit"
    seed: int = 0
    schema: object = None
    split: dict | None = None
    order: str = "balance_then_split"
    balance: dict | None = None
    train: dict = field(default_factory=dict)
    standardize: bool = True
    standardize_stage: str = "after_balance"

    @classmethod
    def from_dict(cls, obj: dict) -> "RunConfig":
        cfg = cls(
            input=obj.get("input", ""),
            topology=obj.get("topology", "single-unit"),
            seed=int(obj.get("seed", 0)),
            schema=obj.get("schema"),
            split=obj.get("split"),
            order=obj.get("order", "balance_then_split"),
            balance=obj.get("balance"),
            train=dict(obj.get("train", {})),
            standardize=bool(obj.get("standardize", True)),
            standardize_stage=obj.get("standardize_stage", "after_balance"),
        )
        if not cfg.input:
            raise _usage("train config needs an \"input\" path")
        if cfg.topology not in TOPOLOGIES:
            raise _usage(f"topology must be one of {TOPOLOGIES}, got {cfg.topology!r}")
        if cfg.order not in ORDER_CHOICES:
            raise _usage(f"order must be one of {ORDER_CHOICES}, got {cfg.order!r}")
        if cfg.standardize_stage not in STANDARDIZE_STAGES:
            raise _usage(
                f"standardize_stage must be one of {STANDARDIZE_STAGES}, "
                f"got {cfg.standardize_stage!r}"
            )
        return cfg

    def to_dict(self) -> dict:
        return {
            "input": self.input,
            "topology": self.topology,
            "seed": self.seed,
            "schema": self.schema,
            "split": self.split,
            "order": self.order,
            "balance": self.balance,
            "train": self.train,
            "standardize": self.standardize,
            "standardize_stage": self.standardize_stage,
        }


def _train_config(cfg: RunConfig):
    from .nnet import TrainConfig

    t = cfg.train
    return TrainConfig(
        epochs=int(t.get("epochs", 30)),
        batch_size=int(t.get("batch_size", 512)),
        learning_rate=float(t.get("learning_rate", 1e-3)),
        optimizer=t.get("optimizer", "adam"),
        beta1=float(t.get("beta1", 0.9)),
        beta2=float(t.get("beta2", 0.999)),
        eps=float(t.get("eps", 1e-8)),
        seed=cfg.seed,
        loss=t.get("loss", "auto"),
    )


def _split_spec(cfg: RunConfig, offset: int):
    from .ingest import SplitSpec

    s = cfg.split or {}
    return SplitSpec(
        train_fraction=float(s.get("train_fraction", 0.8)),
        stratified=bool(s.get("stratified", True)),
        seed=cfg.seed + offset,
    )


def _single_plan(balance_cfg: dict, seed: int):
    from .resample import DEFAULT_K_NEIGHBORS, ResamplingPlan

    return ResamplingPlan(
        targets={str(k): int(v) for k, v in balance_cfg.get("targets", {}).items()},
        k_neighbors=int(balance_cfg.get("k_neighbors", DEFAULT_K_NEIGHBORS)),
        seed=int(balance_cfg.get("seed", seed)),
        clamp_k=bool(balance_cfg.get("clamp_k", False)),
    )


def _uniform_targets(names, level: int) -> dict[str, int]:
    return {name: int(level) for name in names}


def _auto_level1_targets(dataset, schema, skip=()) -> dict[str, int]:
    """Raise every sub-class of a multi-member category to the category's
    largest sub-class count; categories in `skip` keep their imbalance."""
    counts = dataset.class_counts()
    skip = set(skip)
    targets: dict[str, int] = {}
    for category in schema.routing_categories():
        if category in skip:
            continue
        members = [c for c in schema.classes_in_category(category) if c in counts]
        if len(members) < 2:
            continue
        peak = max(counts[c] for c in members)
        for c in members:
            targets[c] = peak
    return targets


def cmd_train(config: dict, out_dir: Path) -> None:
    from .data import ClassSchema
    from .ingest import apply_scaler, fit_scaler, parse_csv, split, write_csv
    from .pipelines import (
        SingleBundle,
        declassify_binary,
        save_bundle,
        train_ids1,
        train_ids2,
    )
    from .resample import DoubleBalanceSpec, balance_to_level
    from .errors import RuntimeFailure

    cfg = RunConfig.from_dict(config)
    _require_inputs([cfg.input])
    schema = _resolve_schema(cfg.schema)
    dataset = parse_csv(cfg.input, schema)
    if schema is None:
        names = sorted(set(map(str, dataset.labels)))
        schema = ClassSchema(classes=tuple(names), benign_class=names[0] if names else None)
    dataset = dataset.with_schema(schema)

    out_dir.mkdir(parents=True, exist_ok=True)

    if cfg.split is not None:
        fit_material, original_test = split(dataset, _split_spec(cfg, 0))
        write_csv(original_test, out_dir / "test_original.csv")
    else:
        fit_material = dataset

    balanced_test = None
    hidden = tuple(int(h) for h in cfg.train.get("hidden", (64, 32)))
    dropout = float(cfg.train.get("dropout_rate", 0.2))
    tcfg = _train_config(cfg)

    # stock ordering standardizes the balanced training material; the
    # alternative stage standardizes first and balances in z-score space
    scaler = None
    if cfg.standardize and cfg.standardize_stage == "before_balance":
        scaler = fit_scaler(fit_material)
        fit_material = apply_scaler(fit_material, scaler)
    fit_after_balance = cfg.standardize and cfg.standardize_stage == "after_balance"

    def maybe_split_balanced(balanced):
        nonlocal balanced_test
        if cfg.order == "balance_then_split" and cfg.split is not None:
            train_part, balanced_test = split(balanced, _split_spec(cfg, 1))
            return train_part
        return balanced

    try:
        if cfg.topology == "single-unit":
            material = fit_material
            if cfg.balance:
                material = maybe_split_balanced(
                    balance_to_level(material, _single_plan(cfg.balance, cfg.seed))
                )
            if fit_after_balance:
                scaler = fit_scaler(material)
                material = apply_scaler(material, scaler)
            head = cfg.train.get("head", "softmax")
            vocab = [c for c in schema.classes if c in set(map(str, material.labels))]
            unit_schema = ClassSchema(
                classes=tuple(vocab),
                benign_class=schema.benign_class if schema.benign_class in vocab else None,
            )
            from .pipelines import train_unit

            model, history = train_unit(
                material, vocab, head, tcfg, cfg.seed, hidden, dropout
            )
            bundle = SingleBundle(model, unit_schema, scaler)
            histories = {"unit": history}
        elif cfg.topology == "ids1":
            bal = cfg.balance or {}
            material = fit_material
            binary_view = declassify_binary(material, schema)
            attack_mask = material.labels != schema.benign_class
            attack_view = material.select(attack_mask)

            k = int(bal.get("k_neighbors", 5))
            clamp = bool(bal.get("clamp_k", False))

            def plan(targets):
                from .resample import ResamplingPlan

                return ResamplingPlan(targets, k, cfg.seed, clamp)

            if bal.get("binary_level"):
                binary_view = balance_to_level(
                    binary_view, plan(_uniform_targets(("Benign", "Attack"), bal["binary_level"]))
                )
            if bal.get("multi_level"):
                present = [c for c in schema.classes if c in material.class_counts()]
                material = balance_to_level(
                    material, plan(_uniform_targets(present, bal["multi_level"]))
                )
                present_attacks = [
                    c for c in schema.attack_classes if c in attack_view.class_counts()
                ]
                attack_view = balance_to_level(
                    attack_view, plan(_uniform_targets(present_attacks, bal["multi_level"]))
                )
            material = maybe_split_balanced(material)
            if fit_after_balance:
                scaler = fit_scaler(material)
                material = apply_scaler(material, scaler)
                binary_view = apply_scaler(binary_view, scaler)
                attack_view = apply_scaler(attack_view, scaler)
            bundle, histories = train_ids1(
                binary_view, material, attack_view, tcfg, schema,
                hidden, dropout, scaler,
            )
        else:  # ids2
            bal = cfg.balance or {}
            level1_cfg = bal.get("level1_targets", "auto")
            if level1_cfg == "auto":
                level1_targets = _auto_level1_targets(
                    fit_material, schema, bal.get("level1_skip_categories", ())
                )
            else:
                level1_targets = {str(kk): int(v) for kk, v in (level1_cfg or {}).items()}
            level2_cfg = bal.get("level2_targets", {})
            if isinstance(level2_cfg, int):
                level2_targets = _uniform_targets(schema.routing_categories(), level2_cfg)
            else:
                level2_targets = {str(kk): int(v) for kk, v in (level2_cfg or {}).items()}
            spec = DoubleBalanceSpec(
                level1_targets=level1_targets,
                level2_targets=level2_targets,
                schema=schema,
                k_neighbors=int(bal.get("k_neighbors", 5)),
                seed=cfg.seed,
                clamp_k=bool(bal.get("clamp_k", False)),
            )
            material = fit_material.with_schema(schema)
            if level1_targets:
                material = balance_to_level(material, spec.level1_plan())
                spec = DoubleBalanceSpec(
                    {}, spec.level2_targets, schema, spec.k_neighbors, spec.seed, spec.clamp_k
                )
            material = maybe_split_balanced(material)
            if fit_after_balance:
                scaler = fit_scaler(material)
                material = apply_scaler(material, scaler)
            terminal = frozenset(bal.get("terminal_categories", ("Benign", "DDoS", "PortScan")))
            bundle, histories = train_ids2(
                material, spec, tcfg, terminal, hidden, dropout, scaler
            )
    except Exception as exc:
        from .errors import ValidationError

        if isinstance(exc, ValidationError):
            raise
        raise RuntimeFailure(f"training failed: {exc}") from exc

    if balanced_test is not None:
        if scaler is not None and cfg.standardize_stage == "before_balance":
            # the balanced pool lives in z-score space here; test files stay raw
            from .ingest import invert_scaler

            balanced_test = invert_scaler(balanced_test, scaler)
        write_csv(balanced_test, out_dir / "test_balanced.csv")

    bundle_dir = out_dir / "bundle"
    save_bundle(bundle, bundle_dir)
    history_payload = {
        "seed": cfg.seed,
        "units": {name: h.to_json() for name, h in histories.items()},
    }
    (out_dir / "history.json").write_text(_json_text(history_payload), encoding="utf-8")
    _write_run_json(out_dir, "train", cfg.to_dict())
    print(f"wrote bundle to {bundle_dir} (units: {', '.join(sorted(histories))})")


# --- evaluate ---------------------------------------------------------------

def _routable_mask(dataset, schema):
    import numpy as np

    leaves: set[str] = set()
    for category in schema.routing_categories():
        leaves.update(schema.classes_in_category(category))
    return np.asarray([lab in leaves for lab in dataset.labels], dtype=bool)


def cmd_evaluate(config: dict, out_dir: Path) -> None:
    from .evaluate import contrast, evaluate, render_heatmap, write_report
    from .ingest import apply_scaler, parse_csv
    from .pipelines import Ids2Bundle, load_bundle

    bundle_path = config.get("bundle")
    test_path = config.get("test")
    if not bundle_path or not test_path:
        raise _usage("evaluate config needs \"bundle\" and \"test\" paths")
    _require_inputs([Path(bundle_path) / "bundle.json", test_path])
    original_path = config.get("original_test")
    if original_path:
        _require_inputs([original_path])

    bundle = load_bundle(bundle_path)

    def prepare(path):
        d = parse_csv(path)
        if isinstance(bundle, Ids2Bundle):
            mask = _routable_mask(d, bundle.schema)
            d = d.select(mask)
        if bundle.scaler is not None:
            d = apply_scaler(d, bundle.scaler)
        return d

    test = prepare(test_path)
    out_dir.mkdir(parents=True, exist_ok=True)
    if original_path:
        report = contrast(bundle, test, prepare(original_path))
        write_report(report, out_dir / "report.json")
        render_heatmap(report.balanced.confusion, out_dir / "heatmap_balanced.svg")
        render_heatmap(report.original.confusion, out_dir / "heatmap_original.svg")
        summary = {
            name: round(delta, 6) for name, delta in report.f1_delta.items()
        }
        print(f"balanced acc {report.balanced.accuracy:.4f}, "
              f"original acc {report.original.accuracy:.4f}, f1 deltas {summary}")
    else:
        report = evaluate(bundle, test)
        write_report(report, out_dir / "report.json")
        render_heatmap(report.confusion, out_dir / "heatmap.svg")
        print(f"accuracy {report.accuracy:.4f}, macro-F1 {report.macro_f1:.4f}")
    _write_run_json(out_dir, "evaluate", dict(config))


# --- entry point ------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flowgate",
        description="Desk-scale flow-classification pipelines: synthesize, "
        "ingest, balance, train, evaluate.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("synth", "generate a Gaussian-cluster dataset CSV"),
        ("ingest", "parse, merge, and clean flow CSVs"),
        ("balance", "resample a cleaned dataset to plan targets"),
        ("train", "train a unit or a hierarchical bundle"),
        ("evaluate", "score a bundle on one or two test sets"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="JSON config path")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
    return parser


_COMMANDS = {
    "synth": cmd_synth,
    "ingest": cmd_ingest,
    "balance": cmd_balance,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
}


def main(argv=None) -> int:
    _apply_thread_cap()
    args = _build_parser().parse_args(argv)
    from .errors import RuntimeFailure, ValidationError

    try:
        config = _load_config(args.config)
        if args.seed is not None:
            config["seed"] = args.seed
        _COMMANDS[args.command](config, Path(args.out))
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (RuntimeFailure, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
