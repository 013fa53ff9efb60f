"""Dense networks with hand-derived gradients.

Weights are stored ``(out, in)`` so a layer computes ``act(x @ W.T + b)`` on a
row-major batch. Everything runs in float64; only the on-disk format is f32.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .formats import atomic_write

ACTIVATIONS = ("identity", "relu", "tanh")
TAP_NAMES = "ABCDE"
LOG_CLAMP = 1e-12

MODEL_MAGIC = b"DSCM"
MODEL_VERSION = 1


class ShapeError(ValueError):
    """Input or gradient dimensions disagree with a layer."""

    def __init__(self, layer: int, expected: int, got: int, what: str = "input"):
        self.layer = layer
        super().__init__(f"layer {layer}: expected {what} width {expected}, got {got}")


class NonFiniteError(FloatingPointError):
    def __init__(self, message: str, layer: int | None = None):
        self.layer = layer
        super().__init__(message)


@dataclass
class DenseLayer:
    weights: np.ndarray
    bias: np.ndarray
    activation: str = "relu"

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64).reshape(-1)
        if self.weights.ndim != 2 or self.bias.shape[0] != self.weights.shape[0]:
            raise ValueError(
                f"bias of length {self.bias.shape[0]} does not fit weights {self.weights.shape}"
            )
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]


def default_taps(n_layers: int) -> list[int]:
    """The last five layer indices (all of them for shallower nets)."""
    return list(range(max(0, n_layers - len(TAP_NAMES)), n_layers))


@dataclass
class MLPModel:
    layers: list[DenseLayer]
    tap_points: list[int] = field(default_factory=list)

    def __post_init__(self):
        if not self.layers:
            raise ValueError("model needs at least one layer")
        for i in range(1, len(self.layers)):
            prev, cur = self.layers[i - 1], self.layers[i]
            if cur.in_dim != prev.out_dim:
                raise ShapeError(i, prev.out_dim, cur.in_dim)
        if not self.tap_points:
            self.tap_points = default_taps(len(self.layers))
        taps = list(self.tap_points)
        if len(taps) > len(TAP_NAMES):
            raise ValueError(f"at most {len(TAP_NAMES)} tap points supported")
        if any(b <= a for a, b in zip(taps, taps[1:])):
            raise ValueError(f"tap points must be strictly increasing: {taps}")
        if taps[-1] != len(self.layers) - 1:
            raise ValueError("last tap point must be the final layer")
        if taps[0] < 0:
            raise ValueError("negative tap index")
        self.tap_points = taps

    @property
    def input_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def output_dim(self) -> int:
        return self.layers[-1].out_dim

    @property
    def tap_names(self) -> list[str]:
        return list(TAP_NAMES[: len(self.tap_points)])

    def tap_index(self, tap: str) -> int:
        names = self.tap_names
        if tap not in names:
            raise KeyError(f"unknown tap {tap!r}; model has {''.join(names)}")
        return self.tap_points[names.index(tap)]

    def n_params(self) -> int:
        return sum(l.weights.size + l.bias.size for l in self.layers)

    def copy(self) -> "MLPModel":
        return MLPModel(
            [DenseLayer(l.weights.copy(), l.bias.copy(), l.activation) for l in self.layers],
            list(self.tap_points),
        )


def init_mlp(
    sizes: Sequence[int],
    seed: int,
    hidden_activation: str = "relu",
    output_activation: str = "identity",
    tap_points: Sequence[int] | None = None,
) -> MLPModel:
    """Glorot-uniform weights, zero bias. ``sizes`` includes the input width."""
    if len(sizes) < 2:
        raise ValueError("sizes needs an input and at least one output width")
    rng = np.random.default_rng(seed)
    layers = []
    for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-limit, limit, size=(fan_out, fan_in))
        act = output_activation if i == len(sizes) - 2 else hidden_activation
        layers.append(DenseLayer(w, np.zeros(fan_out), act))
    return MLPModel(layers, list(tap_points) if tap_points else [])


def _activate(z: np.ndarray, activation: str) -> np.ndarray:
    if activation == "relu":
        return np.maximum(z, 0.0)
    if activation == "tanh":
        return np.tanh(z)
    return z


def _activation_grad(z: np.ndarray, a: np.ndarray, activation: str) -> np.ndarray:
    if activation == "relu":
        return (z > 0).astype(np.float64)
    if activation == "tanh":
        return 1.0 - a * a
    return np.ones_like(z)


def _check_batch(model: MLPModel, batch) -> np.ndarray:
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != model.input_dim:
        got = x.shape[1] if x.ndim == 2 else -1
        raise ShapeError(0, model.input_dim, got)
    return x


def forward_all(model: MLPModel, batch) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Return (pre-activations, post-activations), one entry per layer."""
    x = _check_batch(model, batch)
    pre, post = [], []
    for layer in model.layers:
        z = x @ layer.weights.T + layer.bias
        x = _activate(z, layer.activation)
        pre.append(z)
        post.append(x)
    return pre, post


def forward(model: MLPModel, batch) -> list[np.ndarray]:
    """Activations at each tap point; the last entry is the final output (logits)."""
    _, post = forward_all(model, batch)
    return [post[i] for i in model.tap_points]


def predict(model: MLPModel, batch) -> np.ndarray:
    return forward_all(model, batch)[1][-1]


def backward(
    model: MLPModel, batch, pre: list[np.ndarray], post: list[np.ndarray], grad_out: np.ndarray
) -> list[tuple[np.ndarray, np.ndarray]]:
    """Parameter gradients given dL/d(final output)."""
    x = _check_batch(model, batch)
    grad_out = np.asarray(grad_out, dtype=np.float64)
    if grad_out.shape != post[-1].shape:
        raise ShapeError(len(model.layers) - 1, post[-1].shape[-1], grad_out.shape[-1], "gradient")
    grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(model.layers)  # type: ignore
    g = grad_out
    for i in range(len(model.layers) - 1, -1, -1):
        layer = model.layers[i]
        dz = g if layer.activation == "identity" else g * _activation_grad(pre[i], post[i], layer.activation)
        inp = post[i - 1] if i > 0 else x
        dw = dz.T @ inp
        db = dz.sum(axis=0)
        # a sum is non-finite iff some entry is (barring overflow, which is fatal anyway)
        if not math.isfinite(float(db.sum()) + float(dw.sum())):
            raise NonFiniteError(f"non-finite gradient in layer {i}", layer=i)
        grads[i] = (dw, db)
        if i > 0:
            g = dz @ layer.weights
    return grads


# -- probabilities and losses ------------------------------------------------


def softmax_t(logits, T: float = 1.0) -> np.ndarray:
    """Temperature softmax along the last axis."""
    if not T > 0:
        raise ValueError(f"temperature must be positive, got {T}")
    z = np.asarray(logits, dtype=np.float64) / T
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax_t(logits, T: float = 1.0) -> np.ndarray:
    if not T > 0:
        raise ValueError(f"temperature must be positive, got {T}")
    z = np.asarray(logits, dtype=np.float64) / T
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def kl_divergence(p, q) -> float:
    """KL(p || q) = sum p log(p / q), with q clamped at 1e-12 and 0 log 0 = 0."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {q.shape}")
    for name, v in (("p", p), ("q", q)):
        if abs(v.sum() - 1.0) > 1e-9:
            raise ValueError(f"{name} does not sum to 1 (sum={v.sum()!r})")
    mask = p > 0
    kl = np.sum(p[mask] * (np.log(p[mask]) - np.log(np.maximum(q[mask], LOG_CLAMP))))
    return float(max(kl, 0.0))


def cross_entropy(logits, label: int) -> float:
    logits = np.asarray(logits, dtype=np.float64)
    if not 0 <= label < logits.shape[-1]:
        raise IndexError(f"label {label} out of range for {logits.shape[-1]} classes")
    return float(-log_softmax_t(logits, 1.0)[label])


LossFn = Callable[[np.ndarray], tuple[float, np.ndarray]]


def cross_entropy_loss(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Batch-mean cross-entropy and its gradient w.r.t. the logits."""
    labels = np.asarray(labels, dtype=np.int64)
    n, k = logits.shape
    if labels.min() < 0 or labels.max() >= k:
        raise IndexError("label out of range")
    logp = log_softmax_t(logits, 1.0)
    rows = np.arange(n)
    loss = -logp[rows, labels].mean()
    grad = np.exp(logp)
    grad[rows, labels] -= 1.0
    return float(loss), grad / n


def distillation_loss(
    student_logits: np.ndarray,
    teacher_logits: np.ndarray,
    T: float,
    scale_t2: bool = False,
) -> tuple[float, np.ndarray]:
    """Batch mean of KL(softmax(g/T) || softmax(F/T)) and its gradient w.r.t. g.

    The student distribution is the first KL argument. With p = softmax(g/T)
    the gradient is p * (log(p/q) - KL) / T per row.
    """
    if student_logits.shape != teacher_logits.shape:
        raise ValueError("student and teacher logits differ in shape")
    n = student_logits.shape[0]
    log_p = log_softmax_t(student_logits, T)
    log_q = np.maximum(log_softmax_t(teacher_logits, T), np.log(LOG_CLAMP))
    p = np.exp(log_p)
    ratio = log_p - log_q
    kl_rows = np.sum(p * ratio, axis=1)
    grad = p * (ratio - kl_rows[:, None]) / T / n
    loss = float(np.maximum(kl_rows, 0.0).mean())
    if scale_t2:
        loss *= T * T
        grad *= T * T
    return loss, grad


# -- optimisation --------------------------------------------------------------


@dataclass
class SGDConfig:
    initial_lr: float = 0.1
    decay_every: int = 60
    decay_factor: float = 0.2
    batch_size: int = 64
    epochs: int = 150
    seed: int = 0

    def __post_init__(self):
        if not self.initial_lr > 0:
            raise ValueError("initial_lr must be positive")
        if not 0 < self.decay_factor <= 1:
            raise ValueError("decay_factor must be in (0, 1]")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.decay_every < 1:
            raise ValueError("decay_every must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")


def learning_rate(config: SGDConfig, epoch: int) -> float:
    return config.initial_lr * config.decay_factor ** (epoch // config.decay_every)


def apply_grads(model: MLPModel, grads, lr: float) -> None:
    for layer, (dw, db) in zip(model.layers, grads):
        layer.weights -= lr * dw
        layer.bias -= lr * db


def backward_and_step(
    model: MLPModel, batch, loss_grad: LossFn, config: SGDConfig, epoch: int = 0
) -> tuple[MLPModel, float]:
    """One SGD step in place. ``loss_grad`` maps final outputs to (loss, dL/doutputs)."""
    pre, post = forward_all(model, batch)
    loss, grad_out = loss_grad(post[-1])
    if not np.isfinite(loss):
        raise NonFiniteError(f"non-finite loss {loss}")
    grads = backward(model, batch, pre, post, grad_out)
    apply_grads(model, grads, learning_rate(config, epoch))
    return model, loss


# -- serialisation -------------------------------------------------------------

_ACT_TAGS = {name: i for i, name in enumerate(ACTIVATIONS)}


def model_to_bytes(model: MLPModel) -> bytes:
    parts = [MODEL_MAGIC, struct.pack("<II", MODEL_VERSION, len(model.layers))]
    for layer in model.layers:
        parts.append(struct.pack("<IIB", layer.out_dim, layer.in_dim, _ACT_TAGS[layer.activation]))
        parts.append(layer.weights.astype("<f4").tobytes())
        parts.append(layer.bias.astype("<f4").tobytes())
    return b"".join(parts)


def model_from_bytes(data: bytes, tap_points: Sequence[int] | None = None) -> MLPModel:
    if data[:4] != MODEL_MAGIC:
        raise ValueError("not a model file (bad magic)")
    version, n_layers = struct.unpack_from("<II", data, 4)
    if version != MODEL_VERSION:
        raise ValueError(f"unsupported model format version {version}")
    off = 12
    layers = []
    for _ in range(n_layers):
        out_dim, in_dim, tag = struct.unpack_from("<IIB", data, off)
        off += 9
        w = np.frombuffer(data, dtype="<f4", count=out_dim * in_dim, offset=off)
        off += 4 * out_dim * in_dim
        b = np.frombuffer(data, dtype="<f4", count=out_dim, offset=off)
        off += 4 * out_dim
        layers.append(
            DenseLayer(w.reshape(out_dim, in_dim).astype(np.float64), b.astype(np.float64), ACTIVATIONS[tag])
        )
    if off != len(data):
        raise ValueError(f"trailing bytes in model file ({len(data) - off})")
    return MLPModel(layers, list(tap_points) if tap_points else [])


def save_model(model: MLPModel, path) -> Path:
    return atomic_write(path, model_to_bytes(model))


def load_model(path, tap_points: Sequence[int] | None = None) -> MLPModel:
    return model_from_bytes(Path(path).read_bytes(), tap_points)
