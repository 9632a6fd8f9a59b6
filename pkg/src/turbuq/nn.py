"""From-scratch fully connected network for scalar regression.

Forward pass, exact reverse-mode gradients of the summed squared error
E = sum_i (y_i - y_t,i)^2, Adam updates with bias correction, inverted
dropout on the hidden layers and Xavier-uniform initialization. The
default architecture is 9 inputs, 8 hidden layers of 15 units and one
linear output. Everything runs in double precision and is deterministic
for a fixed seed (initialization, shuffles and dropout masks all draw
from generators spawned off the configured seed).
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DivergenceError, DomainError, ModelLoadError, SchemaError, TurbuqError

MODEL_FORMAT = "turbuq-mlp"
MODEL_FORMAT_VERSION = 1

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

#: Relative improvement of the validation loss below which an epoch does
#: not reset the early-stopping counter.
_MIN_REL_IMPROVEMENT = 1e-9

ACTIVATIONS = ("relu", "tanh")


def _activate(z: np.ndarray, name: str) -> np.ndarray:
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "tanh":
        return np.tanh(z)
    raise ConfigError(f"unknown activation {name!r}, expected one of {ACTIVATIONS}")


def _activate_grad(z: np.ndarray, name: str) -> np.ndarray:
    if name == "relu":
        return (z > 0.0).astype(float)
    if name == "tanh":
        t = np.tanh(z)
        return 1.0 - t * t
    raise ConfigError(f"unknown activation {name!r}, expected one of {ACTIVATIONS}")


def default_layer_sizes(n_inputs: int = 9, hidden_layers: int = 8, hidden_width: int = 15) -> list[int]:
    return [n_inputs] + [hidden_width] * hidden_layers + [1]


@dataclass
class MlpModel:
    """Layer sizes, parameters and the inference-time metadata."""

    layer_sizes: list[int]
    weights: list[np.ndarray]  # weights[p] has shape (out_p, in_p)
    biases: list[np.ndarray]  # biases[p] has shape (out_p,)
    activation: str = "relu"
    dropout_rate: float = 0.0
    feature_mean: np.ndarray | None = None
    feature_scale: np.ndarray | None = None
    format_version: int = MODEL_FORMAT_VERSION

    @property
    def n_inputs(self) -> int:
        return self.layer_sizes[0]

    def copy_parameters(self) -> tuple[list[np.ndarray], list[np.ndarray]]:
        return [w.copy() for w in self.weights], [b.copy() for b in self.biases]

    def set_parameters(self, weights, biases) -> None:
        self.weights = [w.copy() for w in weights]
        self.biases = [b.copy() for b in biases]


@dataclass
class ForwardCache:
    """Per-layer pre-activations and activations kept for backpropagation."""

    inputs: np.ndarray  # (B, n_in) after standardization
    zs: list[np.ndarray]  # pre-activations per layer, (B, out_p)
    ys: list[np.ndarray]  # activations, ys[0] = inputs, ys[p+1] after layer p
    masks: list[np.ndarray] | None  # dropout masks, hidden layers only
    outputs: np.ndarray  # (B,)


@dataclass
class Gradients:
    weights: list[np.ndarray]
    biases: list[np.ndarray]


@dataclass
class AdamState:
    """First/second moment accumulators, one per parameter array."""

    m_weights: list[np.ndarray]
    v_weights: list[np.ndarray]
    m_biases: list[np.ndarray]
    v_biases: list[np.ndarray]
    t: int = 0
    learning_rate: float = 2.5e-4
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    eps: float = ADAM_EPS


@dataclass
class TrainConfig:
    learning_rate: float = 2.5e-4
    batch_size: int = 256
    max_epochs: int = 2000
    patience: int = 50
    dropout_rate: float = 0.1
    seed: int = 0
    validation_fraction: float = 0.2
    activation: str = "relu"
    standardize: bool = True
    hidden_layers: int = 8
    hidden_width: int = 15

    def validate(self) -> None:
        if self.learning_rate <= 0.0:
            raise ConfigError(f"learning rate must be positive, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ConfigError(f"batch size must be >= 1, got {self.batch_size}")
        if self.patience < 1:
            raise ConfigError(f"patience must be >= 1, got {self.patience}")
        if not (0.0 <= self.dropout_rate < 1.0):
            raise ConfigError(f"dropout rate must lie in [0, 1), got {self.dropout_rate}")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}")
        if self.max_epochs < 1:
            raise ConfigError(f"max epochs must be >= 1, got {self.max_epochs}")
        if not (0.0 < self.validation_fraction < 1.0):
            raise ConfigError(
                f"validation fraction must lie in (0, 1), got {self.validation_fraction}"
            )


@dataclass
class HistoryRow:
    epoch: int
    train_loss: float
    val_loss: float
    learning_rate: float
    wall_time: float


def xavier_init(
    layer_sizes,
    seed: int | None = None,
    rng: np.random.Generator | None = None,
    activation: str = "relu",
    dropout_rate: float = 0.0,
) -> MlpModel:
    """Uniform init in +-sqrt(6 / (fan_in + fan_out)); zero biases."""
    sizes = [int(s) for s in layer_sizes]
    if len(sizes) < 2 or any(s < 1 for s in sizes):
        raise ConfigError(f"layer sizes must be >= 1 with at least two layers, got {sizes}")
    if rng is None:
        rng = np.random.default_rng(seed)
    weights = []
    biases = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpModel(sizes, weights, biases, activation=activation, dropout_rate=dropout_rate)


def forward_batch(
    model: MlpModel,
    x: np.ndarray,
    mode: str = "infer",
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, ForwardCache]:
    """Batched forward pass; x has shape (B, n_inputs)."""
    if mode not in ("infer", "train"):
        raise DomainError(f"mode must be 'infer' or 'train', got {mode!r}")
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[1] != model.n_inputs:
        raise SchemaError(
            f"input has shape {x.shape}, model expects (batch, {model.n_inputs})"
        )
    if not np.all(np.isfinite(x)):
        raise DomainError("network input contains non-finite values")
    if model.feature_mean is not None:
        x = (x - model.feature_mean) / model.feature_scale

    rate = model.dropout_rate
    use_dropout = mode == "train" and rate > 0.0
    if use_dropout and rng is None:
        raise DomainError("train-mode forward with dropout needs an rng")

    ys = [x]
    zs: list[np.ndarray] = []
    masks: list[np.ndarray] = [] if use_dropout else None
    last = len(model.weights) - 1
    for p, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = ys[-1] @ w.T + b
        zs.append(z)
        if p == last:
            ys.append(z)  # identity output
        else:
            a = _activate(z, model.activation)
            if use_dropout:
                mask = rng.random(a.shape) >= rate
                a = a * mask / (1.0 - rate)
                masks.append(mask)
            ys.append(a)
    outputs = ys[-1][:, 0]
    return outputs, ForwardCache(x, zs, ys, masks, outputs)


def forward(
    model: MlpModel,
    x,
    mode: str = "infer",
    rng: np.random.Generator | None = None,
) -> tuple[float, ForwardCache]:
    """Single-sample forward pass; returns the scalar prediction."""
    x = np.asarray(x, dtype=float).reshape(1, -1)
    y, cache = forward_batch(model, x, mode=mode, rng=rng)
    return float(y[0]), cache


def loss(y_pred, y_true) -> float:
    """Summed squared error E = sum_i (y_i - y_t,i)^2."""
    y_pred = np.asarray(y_pred, dtype=float).ravel()
    y_true = np.asarray(y_true, dtype=float).ravel()
    if y_pred.shape != y_true.shape:
        raise DomainError(f"batch lengths differ: {y_pred.shape} vs {y_true.shape}")
    diff = y_pred - y_true
    return float(diff @ diff)


def mean_loss(y_pred, y_true) -> float:
    """Per-sample mean of the squared error, used for logging."""
    n = len(np.asarray(y_pred).ravel())
    return loss(y_pred, y_true) / max(n, 1)


def backward(model: MlpModel, cache: ForwardCache, y_true) -> Gradients:
    """Gradients of the summed squared error for every weight and bias.

    Dropout masks recorded during the forward pass are applied on the way
    back, so the derivatives match the masked forward computation exactly.
    """
    y_true = np.asarray(y_true, dtype=float).ravel()
    n_layers = len(model.weights)
    if len(cache.zs) != n_layers or len(cache.ys) != n_layers + 1:
        raise TurbuqError("internal: forward cache does not match the model layout")
    if y_true.shape != cache.outputs.shape:
        raise DomainError(
            f"target batch has shape {y_true.shape}, cache holds {cache.outputs.shape}"
        )

    rate = model.dropout_rate
    grads_w: list[np.ndarray | None] = [None] * n_layers
    grads_b: list[np.ndarray | None] = [None] * n_layers

    # dE/dy = 2 (y - y_t); the output layer is linear so this is dE/dz too.
    delta = 2.0 * (cache.outputs - y_true)[:, None]
    for p in range(n_layers - 1, -1, -1):
        grads_w[p] = delta.T @ cache.ys[p]
        grads_b[p] = delta.sum(axis=0)
        if p == 0:
            break
        d_prev = delta @ model.weights[p]
        if cache.masks is not None:
            d_prev = d_prev * cache.masks[p - 1] / (1.0 - rate)
        delta = d_prev * _activate_grad(cache.zs[p - 1], model.activation)
    return Gradients(grads_w, grads_b)


def adam_init(model: MlpModel, learning_rate: float) -> AdamState:
    return AdamState(
        m_weights=[np.zeros_like(w) for w in model.weights],
        v_weights=[np.zeros_like(w) for w in model.weights],
        m_biases=[np.zeros_like(b) for b in model.biases],
        v_biases=[np.zeros_like(b) for b in model.biases],
        learning_rate=learning_rate,
    )


def adam_step(model: MlpModel, grads: Gradients, state: AdamState) -> tuple[MlpModel, AdamState]:
    """One Adam update with bias correction; mutates model and state."""
    state.t += 1
    b1t = 1.0 - state.beta1**state.t
    b2t = 1.0 - state.beta2**state.t

    def update(param, grad, m, v):
        m *= state.beta1
        m += (1.0 - state.beta1) * grad
        v *= state.beta2
        v += (1.0 - state.beta2) * grad * grad
        param -= state.learning_rate * (m / b1t) / (np.sqrt(v / b2t) + state.eps)

    for w, gw, m, v in zip(model.weights, grads.weights, state.m_weights, state.v_weights):
        update(w, gw, m, v)
    for b, gb, m, v in zip(model.biases, grads.biases, state.m_biases, state.v_biases):
        update(b, gb, m, v)
    return model, state


def train(samples, config: TrainConfig) -> tuple[MlpModel, list[HistoryRow]]:
    """Mini-batch Adam training with early stopping on the validation loss.

    Keeps the parameters of the best validation epoch and returns them
    together with the per-epoch history.
    """
    config.validate()
    x_train, y_train = samples.matrix("train")
    x_val, y_val = samples.matrix("validation")
    if len(x_train) == 0:
        raise ConfigError("training subset is empty")
    if len(x_val) == 0:
        raise ConfigError("validation subset is empty")

    init_ss, shuffle_ss, dropout_ss = np.random.SeedSequence(config.seed).spawn(3)
    sizes = default_layer_sizes(
        n_inputs=x_train.shape[1],
        hidden_layers=config.hidden_layers,
        hidden_width=config.hidden_width,
    )
    model = xavier_init(
        sizes,
        rng=np.random.default_rng(init_ss),
        activation=config.activation,
        dropout_rate=config.dropout_rate,
    )
    if config.standardize:
        mean = x_train.mean(axis=0)
        std = x_train.std(axis=0)
        model.feature_mean = mean
        model.feature_scale = np.where(std > 1e-12, std, 1.0)

    shuffle_rng = np.random.default_rng(shuffle_ss)
    dropout_rng = np.random.default_rng(dropout_ss)
    state = adam_init(model, config.learning_rate)

    best_weights, best_biases = model.copy_parameters()
    best_val = math.inf
    stale_epochs = 0
    history: list[HistoryRow] = []
    t_start = time.perf_counter()
    n_train = len(x_train)

    for epoch in range(1, config.max_epochs + 1):
        order = shuffle_rng.permutation(n_train)
        for batch_no, start in enumerate(range(0, n_train, config.batch_size)):
            idx = order[start : start + config.batch_size]
            y_pred, cache = forward_batch(model, x_train[idx], mode="train", rng=dropout_rng)
            batch_loss = loss(y_pred, y_train[idx])
            if not math.isfinite(batch_loss):
                raise DivergenceError(
                    f"non-finite loss at epoch {epoch}, batch {batch_no}"
                )
            grads = backward(model, cache, y_train[idx])
            adam_step(model, grads, state)

        train_mse = mean_loss(forward_batch(model, x_train)[0], y_train)
        val_mse = mean_loss(forward_batch(model, x_val)[0], y_val)
        if not (math.isfinite(train_mse) and math.isfinite(val_mse)):
            raise DivergenceError(f"non-finite evaluation loss at epoch {epoch}")
        history.append(
            HistoryRow(epoch, train_mse, val_mse, config.learning_rate, time.perf_counter() - t_start)
        )
        if val_mse < best_val * (1.0 - _MIN_REL_IMPROVEMENT):
            best_val = val_mse
            best_weights, best_biases = model.copy_parameters()
            stale_epochs = 0
        else:
            stale_epochs += 1
            if stale_epochs >= config.patience:
                break

    model.set_parameters(best_weights, best_biases)
    return model, history


def predict_field(model: MlpModel, features: np.ndarray) -> tuple[np.ndarray, int]:
    """Inference over a feature matrix, clamped to [0, 1].

    Returns the predictions and the number of clamped points.
    """
    y, _ = forward_batch(model, np.asarray(features, dtype=float))
    clamped = int(np.count_nonzero((y < 0.0) | (y > 1.0)))
    return np.clip(y, 0.0, 1.0), clamped


def _format_floats(values) -> str:
    return " ".join(repr(float(v)) for v in values)


def save_model(model: MlpModel, path, header_lines=()) -> None:
    """Structured text serialization with round-trip exact parameters."""
    with open(path, "w", encoding="utf-8") as handle:
        for line in header_lines:
            handle.write(f"# {line}\n")
        handle.write(f"format {MODEL_FORMAT} {model.format_version}\n")
        handle.write("layers " + " ".join(str(s) for s in model.layer_sizes) + "\n")
        handle.write(f"activation {model.activation}\n")
        handle.write(f"dropout {repr(float(model.dropout_rate))}\n")
        handle.write(f"standardize {1 if model.feature_mean is not None else 0}\n")
        if model.feature_mean is not None:
            handle.write("feature_mean " + _format_floats(model.feature_mean) + "\n")
            handle.write("feature_scale " + _format_floats(model.feature_scale) + "\n")
        for p, (w, b) in enumerate(zip(model.weights, model.biases)):
            handle.write(f"weights {p} {w.shape[0]} {w.shape[1]}\n")
            for row in w:
                handle.write(_format_floats(row) + "\n")
            handle.write(f"biases {p} {b.shape[0]}\n")
            handle.write(_format_floats(b) + "\n")
        handle.write("end\n")


class _ModelReader:
    def __init__(self, path):
        self.path = Path(path)
        if not self.path.exists():
            raise ModelLoadError(f"model file not found: {path}")
        self.lines = self.path.read_text(encoding="utf-8").splitlines()
        self.pos = 0

    def fail(self, message: str):
        raise ModelLoadError(f"{self.path}:{self.pos}: {message}")

    def next_line(self) -> str:
        while self.pos < len(self.lines):
            line = self.lines[self.pos].strip()
            self.pos += 1
            if line and not line.startswith("#"):
                return line
        raise ModelLoadError(f"{self.path}: unexpected end of file")

    def floats(self, line: str, expected: int) -> np.ndarray:
        parts = line.split()
        if len(parts) != expected:
            self.fail(f"expected {expected} numbers, found {len(parts)}")
        try:
            return np.array([float(p) for p in parts])
        except ValueError:
            self.fail(f"cannot parse numbers from {line!r}")

    def ints(self, parts) -> list[int]:
        try:
            return [int(p) for p in parts]
        except ValueError:
            self.fail(f"cannot parse integers from {parts!r}")


def load_model(path) -> MlpModel:
    """Inverse of :func:`save_model`; load(save(m)) reproduces m exactly."""
    r = _ModelReader(path)
    head = r.next_line().split()
    if len(head) != 3 or head[0] != "format" or head[1] != MODEL_FORMAT:
        r.fail(f"not a {MODEL_FORMAT} file")
    if r.ints(head[2:]) != [MODEL_FORMAT_VERSION]:
        r.fail(f"unsupported format version {head[2]}, expected {MODEL_FORMAT_VERSION}")

    parts = r.next_line().split()
    if parts[0] != "layers" or len(parts) < 3:
        r.fail("expected a 'layers' line with at least two sizes")
    sizes = r.ints(parts[1:])

    parts = r.next_line().split()
    if parts[0] != "activation" or len(parts) != 2 or parts[1] not in ACTIVATIONS:
        r.fail("expected 'activation relu|tanh'")
    activation = parts[1]

    parts = r.next_line().split()
    if parts[0] != "dropout" or len(parts) != 2:
        r.fail("expected a 'dropout' line")
    dropout = float(r.floats(parts[1], 1)[0])

    parts = r.next_line().split()
    if parts[0] != "standardize" or len(parts) != 2 or parts[1] not in ("0", "1"):
        r.fail("expected 'standardize 0|1'")
    mean = scale = None
    if parts[1] == "1":
        parts = r.next_line().split()
        if parts[0] != "feature_mean":
            r.fail("expected a 'feature_mean' line")
        mean = r.floats(" ".join(parts[1:]), sizes[0])
        parts = r.next_line().split()
        if parts[0] != "feature_scale":
            r.fail("expected a 'feature_scale' line")
        scale = r.floats(" ".join(parts[1:]), sizes[0])

    weights = []
    biases = []
    for p, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        parts = r.next_line().split()
        if parts[:2] != ["weights", str(p)] or len(parts) != 4:
            r.fail(f"expected 'weights {p} <rows> <cols>'")
        rows, cols = r.ints(parts[2:])
        if (rows, cols) != (fan_out, fan_in):
            r.fail(
                f"weight block {p} declares shape ({rows}, {cols}), "
                f"layer sizes imply ({fan_out}, {fan_in})"
            )
        w = np.empty((rows, cols))
        for i in range(rows):
            w[i] = r.floats(r.next_line(), cols)
        weights.append(w)
        parts = r.next_line().split()
        if parts[:2] != ["biases", str(p)] or len(parts) != 3 or r.ints(parts[2:]) != [fan_out]:
            r.fail(f"expected 'biases {p} {fan_out}'")
        biases.append(r.floats(r.next_line(), fan_out))
    if r.next_line() != "end":
        r.fail("expected 'end'")

    model = MlpModel(
        sizes,
        weights,
        biases,
        activation=activation,
        dropout_rate=dropout,
        feature_mean=mean,
        feature_scale=scale,
    )
    return model


def regression_metrics(y_pred, y_true) -> dict:
    """MSE, MAE and the coefficient of determination R^2."""
    y_pred = np.asarray(y_pred, dtype=float).ravel()
    y_true = np.asarray(y_true, dtype=float).ravel()
    if y_pred.shape != y_true.shape:
        raise DomainError(f"prediction/target lengths differ: {y_pred.shape} vs {y_true.shape}")
    err = y_pred - y_true
    mse = float(np.mean(err**2))
    mae = float(np.mean(np.abs(err)))
    ss_tot = float(np.sum((y_true - y_true.mean()) ** 2))
    r2 = 1.0 - float(np.sum(err**2)) / ss_tot if ss_tot > 0.0 else math.nan
    return {"mse": mse, "mae": mae, "r2": r2}
