"""From-scratch dense neural network on numpy.

The stock unit is input -> FC(64, ReLU) -> FC(32, ReLU) -> dropout -> head,
where the head is a single sigmoid output for binary units or a softmax row
for multi-class units. Training is plain mini-batch backprop (SGD or Adam)
and is bit-deterministic under a fixed seed on a single thread.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import BadDimension, CorruptModel, ShapeMismatch, WidthMismatch

ACTIVATIONS = ("relu", "sigmoid", "softmax", "identity")
HEADS = ("sigmoid", "softmax")
MODEL_FORMAT_VERSION = 1

# cross-entropy probability clamp
_EPS = 1e-12


@dataclass(frozen=True)
class LayerSpec:
    units: int
    activation: str

    def __post_init__(self):
        if self.units < 1:
            raise BadDimension(f"layer needs >= 1 units, got {self.units}")
        if self.activation not in ACTIVATIONS:
            raise BadDimension(f"unknown activation {self.activation!r}")


@dataclass
class Layer:
    weights: np.ndarray  # (n_in, n_out)
    bias: np.ndarray  # (n_out,)
    activation: str


@dataclass
class MlpModel:
    """Dense layer stack with one dropout slot before the head.

    mode selects dropout behavior: "train" draws a fresh inverted-dropout
    mask from the model's own RNG stream on each gradient call, "infer"
    makes dropout the identity.
    """

    layers: list[Layer]
    dropout_rate: float = 0.0
    mode: str = "infer"
    rng: np.random.Generator = field(default_factory=lambda: np.random.default_rng(0))

    def __post_init__(self):
        if not self.layers:
            raise BadDimension("model needs at least one layer")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise BadDimension("dropout_rate must lie in [0, 1)")
        for a, b in zip(self.layers, self.layers[1:]):
            if a.weights.shape[1] != b.weights.shape[0]:
                raise BadDimension(
                    f"layer dims do not chain: {a.weights.shape} -> {b.weights.shape}"
                )
        for layer in self.layers[:-1]:
            if layer.activation == "softmax":
                raise BadDimension("softmax is only legal as the final layer")

    @property
    def input_width(self) -> int:
        return self.layers[0].weights.shape[0]

    @property
    def output_width(self) -> int:
        return self.layers[-1].weights.shape[1]

    @property
    def head(self) -> str:
        return self.layers[-1].activation

    def parameter_count(self) -> int:
        return sum(l.weights.size + l.bias.size for l in self.layers)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 512
    learning_rate: float = 1e-3
    optimizer: str = "adam"  # "adam" | "sgd"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    loss: str = "auto"  # "auto" | "binary-cross-entropy" | "categorical-cross-entropy"

    def __post_init__(self):
        if self.batch_size < 1:
            raise BadDimension("batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise BadDimension("learning_rate must be > 0")
        if self.optimizer not in ("adam", "sgd"):
            raise BadDimension(f"unknown optimizer {self.optimizer!r}")


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    train_accuracy: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    val_accuracy: list[float] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "train_loss": self.train_loss,
            "train_accuracy": self.train_accuracy,
            "val_loss": self.val_loss,
            "val_accuracy": self.val_accuracy,
        }


def _relu(z: np.ndarray) -> np.ndarray:
    return np.maximum(z, 0.0)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    ez = np.exp(shifted)
    return ez / ez.sum(axis=1, keepdims=True)


def _activate(z: np.ndarray, activation: str) -> np.ndarray:
    if activation == "relu":
        return _relu(z)
    if activation == "sigmoid":
        return _sigmoid(z)
    if activation == "softmax":
        return _softmax(z)
    if activation == "identity":
        return z
    raise BadDimension(f"unknown activation {activation!r}")


def init_model(
    input_width: int,
    hidden: Sequence[int] = (64, 32),
    output_width: int = 1,
    head: str = "softmax",
    dropout_rate: float = 0.2,
    seed: int = 0,
) -> MlpModel:
    """Build a seeded model: He-uniform hidden weights, Glorot-uniform head,
    zero biases. Identical seeds give bit-identical weights."""
    if input_width < 1 or output_width < 1 or any(h < 1 for h in hidden):
        raise BadDimension("all layer widths must be >= 1")
    if head not in HEADS:
        raise BadDimension(f"head must be one of {HEADS}, got {head!r}")
    rng = np.random.default_rng(seed)
    layers: list[Layer] = []
    fan_in = input_width
    for units in hidden:
        limit = math.sqrt(6.0 / fan_in)
        w = rng.uniform(-limit, limit, size=(fan_in, units))
        layers.append(Layer(w, np.zeros(units), "relu"))
        fan_in = units
    limit = math.sqrt(6.0 / (fan_in + output_width))
    w = rng.uniform(-limit, limit, size=(fan_in, output_width))
    layers.append(Layer(w, np.zeros(output_width), head))
    # dropout masks come from a separate stream so init stays comparable
    # across dropout settings
    return MlpModel(layers, dropout_rate, "infer", np.random.default_rng((seed, 1)))


def _forward_cached(m: MlpModel, batch: np.ndarray, train: bool):
    """Forward pass keeping pre-activations for backprop.

    Returns (probabilities, zs, activations, dropout_mask); the mask is None
    outside train mode or when the rate is zero, and applies after the last
    hidden activation.
    """
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[1] != m.input_width:
        raise WidthMismatch(f"batch width {x.shape[1]} vs model input {m.input_width}")
    zs: list[np.ndarray] = []
    acts: list[np.ndarray] = [x]
    mask = None
    a = x
    for i, layer in enumerate(m.layers):
        z = a @ layer.weights + layer.bias
        zs.append(z)
        a = _activate(z, layer.activation)
        is_last_hidden = i == len(m.layers) - 2
        if is_last_hidden and train and m.dropout_rate > 0.0:
            mask = (m.rng.random(a.shape) >= m.dropout_rate).astype(np.float64)
            a = a * mask / (1.0 - m.dropout_rate)
        acts.append(a)
    return a, zs, acts, mask


def forward(m: MlpModel, batch: np.ndarray) -> np.ndarray:
    """Probability matrix for a batch; dropout active only in train mode."""
    probs, _, _, _ = _forward_cached(m, batch, train=(m.mode == "train"))
    return probs


def _as_targets(m: MlpModel, targets: np.ndarray) -> np.ndarray:
    y = np.asarray(targets, dtype=np.float64)
    if y.ndim == 1:
        y = y[:, None]
    if y.shape[1] != m.output_width:
        raise ShapeMismatch(f"target width {y.shape[1]} vs head width {m.output_width}")
    return y


def _cross_entropy(m: MlpModel, probs: np.ndarray, y: np.ndarray) -> float:
    p = np.clip(probs, _EPS, 1.0 - _EPS)
    if m.head == "sigmoid":
        per_row = -(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)).sum(axis=1)
    else:
        per_row = -(y * np.log(p)).sum(axis=1)
    return float(per_row.mean())


def loss_and_gradients(m: MlpModel, batch: np.ndarray, targets: np.ndarray):
    """Mean cross-entropy over the batch plus gradients for every parameter.

    Gradients come from the standard reverse-mode chain rule; for both heads
    the output delta collapses to (p - y) / n. In train mode a dropout mask
    is drawn once per call from the model's RNG stream.
    """
    y = _as_targets(m, targets)
    probs, zs, acts, mask = _forward_cached(m, batch, train=(m.mode == "train"))
    if probs.shape[0] != y.shape[0]:
        raise ShapeMismatch(f"{probs.shape[0]} rows vs {y.shape[0]} targets")
    loss = _cross_entropy(m, probs, y)

    n = probs.shape[0]
    grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(m.layers)  # type: ignore[list-item]
    delta = (probs - y) / n
    for i in range(len(m.layers) - 1, -1, -1):
        a_prev = acts[i]
        grads[i] = (a_prev.T @ delta, delta.sum(axis=0))
        if i == 0:
            break
        delta = delta @ m.layers[i].weights.T
        if i == len(m.layers) - 1 and mask is not None:
            delta = delta * mask / (1.0 - m.dropout_rate)
        prev_act = m.layers[i - 1].activation
        if prev_act == "relu":
            delta = delta * (zs[i - 1] > 0)
        elif prev_act == "sigmoid":
            s = _sigmoid(zs[i - 1])
            delta = delta * s * (1.0 - s)
        elif prev_act == "identity":
            pass
        else:
            raise ShapeMismatch("softmax is only legal as the final layer")
    return loss, grads


def predict(m: MlpModel, batch: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Class indices and probabilities, dropout disabled.

    Softmax rows take the argmax (ties to the lowest index); a sigmoid head
    thresholds at 0.5, with 0.5 itself mapping to class 1.
    """
    probs, _, _, _ = _forward_cached(m, batch, train=False)
    if m.head == "sigmoid" and m.output_width == 1:
        idx = (probs[:, 0] >= 0.5).astype(np.int64)
    else:
        idx = probs.argmax(axis=1)
    return idx, probs


def _target_indices(m: MlpModel, y: np.ndarray) -> np.ndarray:
    if m.head == "sigmoid" and m.output_width == 1:
        return (y[:, 0] >= 0.5).astype(np.int64)
    return y.argmax(axis=1)


def train(
    m: MlpModel,
    features: np.ndarray,
    targets: np.ndarray,
    config: TrainConfig,
    validation: tuple[np.ndarray, np.ndarray] | None = None,
) -> tuple[MlpModel, TrainHistory]:
    """Mini-batch optimization with per-epoch seeded shuffling.

    Mutates the model in place and returns it alongside the history. With a
    fixed (seed, config, data) triple on a single thread, the final weights
    are bit-identical across runs.
    """
    x = np.asarray(features, dtype=np.float64)
    y = _as_targets(m, targets)
    if config.loss == "binary-cross-entropy" and m.head != "sigmoid":
        raise ShapeMismatch("binary-cross-entropy requires a sigmoid head")
    if config.loss == "categorical-cross-entropy" and m.head != "softmax":
        raise ShapeMismatch("categorical-cross-entropy requires a softmax head")

    rng = np.random.default_rng(config.seed)
    history = TrainHistory()
    adam_m = [
        (np.zeros_like(l.weights), np.zeros_like(l.bias)) for l in m.layers
    ]
    adam_v = [
        (np.zeros_like(l.weights), np.zeros_like(l.bias)) for l in m.layers
    ]
    step = 0
    n = x.shape[0]
    for _ in range(config.epochs):
        m.mode = "train"
        perm = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, config.batch_size):
            take = perm[start : start + config.batch_size]
            loss, grads = loss_and_gradients(m, x[take], y[take])
            epoch_loss += loss * take.size
            step += 1
            for i, layer in enumerate(m.layers):
                gw, gb = grads[i]
                if config.optimizer == "sgd":
                    layer.weights -= config.learning_rate * gw
                    layer.bias -= config.learning_rate * gb
                    continue
                mw, mb = adam_m[i]
                vw, vb = adam_v[i]
                mw *= config.beta1
                mw += (1 - config.beta1) * gw
                mb *= config.beta1
                mb += (1 - config.beta1) * gb
                vw *= config.beta2
                vw += (1 - config.beta2) * gw**2
                vb *= config.beta2
                vb += (1 - config.beta2) * gb**2
                corr1 = 1 - config.beta1**step
                corr2 = 1 - config.beta2**step
                layer.weights -= config.learning_rate * (mw / corr1) / (
                    np.sqrt(vw / corr2) + config.eps
                )
                layer.bias -= config.learning_rate * (mb / corr1) / (
                    np.sqrt(vb / corr2) + config.eps
                )
        m.mode = "infer"
        history.train_loss.append(epoch_loss / n)
        idx, _ = predict(m, x)
        history.train_accuracy.append(float((idx == _target_indices(m, y)).mean()))
        if validation is not None:
            vx, vy = validation
            vy = _as_targets(m, vy)
            vprobs, _, _, _ = _forward_cached(m, vx, train=False)
            history.val_loss.append(_cross_entropy(m, vprobs, vy))
            vidx, _ = predict(m, vx)
            history.val_accuracy.append(float((vidx == _target_indices(m, vy)).mean()))
    m.mode = "infer"
    return m, history


def save_model(m: MlpModel, sink) -> None:
    """Serialize to the versioned JSON envelope (weights row-major)."""
    payload = {
        "version": MODEL_FORMAT_VERSION,
        "layers": [
            {
                "rows": l.weights.shape[0],
                "cols": l.weights.shape[1],
                "weights": l.weights.reshape(-1).tolist(),
                "bias": l.bias.tolist(),
                "activation": l.activation,
            }
            for l in m.layers
        ],
        "dropout_rate": m.dropout_rate,
        "head": m.head,
    }
    text = json.dumps(payload, sort_keys=True)
    if isinstance(sink, (str, Path)):
        Path(sink).write_text(text + "\n", encoding="utf-8")
    else:
        sink.write(text + "\n")


def load_model(source) -> MlpModel:
    """Parse a saved model; load(save(m)) reproduces bit-identical outputs."""
    try:
        if isinstance(source, (str, Path)):
            obj = json.loads(Path(source).read_text(encoding="utf-8"))
        else:
            obj = json.load(source)
    except (OSError, json.JSONDecodeError) as exc:
        raise CorruptModel(f"unreadable model file: {exc}") from exc
    if not isinstance(obj, dict):
        raise CorruptModel("model file is not a JSON object")
    version = obj.get("version")
    if version != MODEL_FORMAT_VERSION:
        raise CorruptModel(
            f"unsupported model version {version!r} (expected {MODEL_FORMAT_VERSION})"
        )
    try:
        layers = []
        for spec in obj["layers"]:
            rows, cols = int(spec["rows"]), int(spec["cols"])
            w = np.asarray(spec["weights"], dtype=np.float64)
            if w.size != rows * cols:
                raise CorruptModel(
                    f"layer declares {rows}x{cols} but carries {w.size} weights"
                )
            b = np.asarray(spec["bias"], dtype=np.float64)
            if b.size != cols:
                raise CorruptModel(f"bias length {b.size} does not match cols {cols}")
            layers.append(Layer(w.reshape(rows, cols), b, str(spec["activation"])))
        model = MlpModel(layers, float(obj["dropout_rate"]), "infer")
    except CorruptModel:
        raise
    except (KeyError, TypeError, ValueError, BadDimension) as exc:
        raise CorruptModel(f"malformed model field: {exc}") from exc
    if model.head != obj.get("head"):
        raise CorruptModel(
            f"head field {obj.get('head')!r} does not match final activation {model.head!r}"
        )
    return model
