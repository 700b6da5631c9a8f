"""Dense-network machinery for the fully blind calibration route.

The network is a four-layer perceptron of constant width whose stages mirror
the measurement chain run backwards and forwards: readings to measurand
estimate (stage 1), measurand to event estimate (stage 2), event back to
measurand (stage 3), measurand back to readings (stage 4).  Layers 2 and 3
play the role of the environment response; freezing them while retraining on
drifted readings forces all adaptation into the observation stages.

Everything is plain numpy with analytic reverse-mode gradients, so training
is bit-deterministic given the seeds.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .exceptions import (
    DivergenceError,
    EmptyDatasetError,
    InvalidArgumentError,
)
from .validation import as_series, as_windows, check_seed

NUM_LAYERS = 4
ACTIVATIONS = ("tanh", "linear")

# 1-based indices of the environment-response layers (stages 2 and 3).
ENVIRONMENT_LAYERS = (2, 3)

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

CHECKPOINT_VERSION = 1


@dataclass
class DenseLayer:
    """One fully connected layer: out = activation(weights @ in + bias)."""

    weights: np.ndarray
    bias: np.ndarray
    activation: str
    trainable: bool = True

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 2:
            raise InvalidArgumentError("layer weights must be a matrix")
        if self.bias.shape != (self.weights.shape[0],):
            raise InvalidArgumentError(
                f"bias shape {self.bias.shape} does not match weight rows "
                f"{self.weights.shape[0]}"
            )
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.bias))):
            raise InvalidArgumentError("layer parameters must be finite")
        if self.activation not in ACTIVATIONS:
            raise InvalidArgumentError(
                f"activation must be one of {ACTIVATIONS}, got {self.activation!r}"
            )

    def apply_activation(self, z: np.ndarray) -> np.ndarray:
        return np.tanh(z) if self.activation == "tanh" else z


@dataclass
class MlpNetwork:
    """Four equal-width dense layers realizing the two-stage autoencoder."""

    layers: list[DenseLayer]

    def __post_init__(self):
        if len(self.layers) != NUM_LAYERS:
            raise InvalidArgumentError(
                f"network must have exactly {NUM_LAYERS} layers, got {len(self.layers)}"
            )
        w = self.layers[0].weights.shape[1]
        for i, layer in enumerate(self.layers, start=1):
            if layer.weights.shape != (w, w):
                raise InvalidArgumentError(
                    f"layer {i} must have shape ({w}, {w}), got {layer.weights.shape}"
                )

    @property
    def width(self) -> int:
        return self.layers[0].weights.shape[1]


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for one training phase."""

    alpha: float = 1.0
    beta: float = 1.0
    learning_rate: float = 1e-3
    epochs: int = 200
    batch_size: int = 32
    window_length: int = 128
    optimizer: str = "adam"
    seed: int = 0

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise InvalidArgumentError("loss weights alpha and beta must be >= 0")
        if self.alpha + self.beta <= 0:
            raise InvalidArgumentError("alpha + beta must be > 0")
        if self.learning_rate <= 0:
            raise InvalidArgumentError("learning_rate must be > 0")
        if self.epochs < 0:
            raise InvalidArgumentError("epochs must be >= 0")
        if self.batch_size < 1:
            raise InvalidArgumentError("batch_size must be >= 1")
        if self.window_length < 1:
            raise InvalidArgumentError("window_length must be >= 1")
        if self.optimizer not in ("sgd", "adam"):
            raise InvalidArgumentError(
                f"optimizer must be 'sgd' or 'adam', got {self.optimizer!r}"
            )
        check_seed(self.seed)


@dataclass
class TrainTrace:
    """Per-epoch loss record; loss_x is NaN for phases trained without x."""

    epoch: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=int))
    loss_x: np.ndarray = field(default_factory=lambda: np.empty(0))
    loss_y: np.ndarray = field(default_factory=lambda: np.empty(0))
    total: np.ndarray = field(default_factory=lambda: np.empty(0))

    def __len__(self) -> int:
        return len(self.epoch)


@dataclass(frozen=True)
class LossValues:
    loss_x: float  # NaN when no measurand supervision was given
    loss_y: float
    total: float


@dataclass
class LayerGradients:
    d_weights: np.ndarray
    d_bias: np.ndarray
    trainable: bool


def init_network(window_length: int, seed: int) -> MlpNetwork:
    """Freshly initialized network of the given width, deterministic by seed.

    Weights are uniform in +/- sqrt(6 / (2 * W)) (symmetric fan-based bound),
    biases zero; tanh on layers 1-3, linear on layer 4; all layers trainable.
    """
    w = int(window_length)
    if w < 1:
        raise InvalidArgumentError(f"window_length must be >= 1, got {window_length}")
    rng = np.random.default_rng(check_seed(seed))
    limit = np.sqrt(6.0 / (2.0 * w))
    layers = []
    for i in range(NUM_LAYERS):
        layers.append(
            DenseLayer(
                weights=rng.uniform(-limit, limit, (w, w)),
                bias=np.zeros(w),
                activation="linear" if i == NUM_LAYERS - 1 else "tanh",
            )
        )
    return MlpNetwork(layers)


def _forward_states(net: MlpNetwork, y: np.ndarray) -> list[np.ndarray]:
    """Activations after each layer for a (batch, W) input."""
    states = []
    a = y
    for layer in net.layers:
        a = layer.apply_activation(a @ layer.weights.T + layer.bias)
        states.append(a)
    return states


def forward(net: MlpNetwork, y_window):
    """Evaluate all four stage outputs for one window or a batch of windows.

    Returns (x_tilde, e_tilde, x_hat, y_tilde): measurand estimate, event
    estimate, measurand reconstruction, reading reconstruction.  Shapes match
    the input (vector in, vectors out; batch in, batches out).
    """
    y = np.asarray(y_window, dtype=np.float64)
    if y.shape[-1] != net.width:
        raise InvalidArgumentError(
            f"window length {y.shape[-1]} does not match network width {net.width}"
        )
    return tuple(_forward_states(net, y))


def loss_and_gradients(net: MlpNetwork, y_window, x_window, cfg: TrainConfig):
    """Composite loss and analytic parameter gradients for one batch.

    The loss is alpha * MSE(x, x_tilde) + beta * MSE(y, y_tilde); the x term
    is dropped when ``x_window`` is None (its loss reports as NaN).  Gradients
    are computed for every layer; frozen layers are flagged non-trainable so
    callers can skip applying them.

    Returns (LossValues, [LayerGradients] * 4).
    """
    y = as_windows(y_window, width=net.width, name="y_window")
    x = None
    if x_window is not None:
        x = as_windows(x_window, width=net.width, name="x_window")
        if x.shape != y.shape:
            raise InvalidArgumentError(
                f"x windows {x.shape} do not align with y windows {y.shape}"
            )
    a1, a2, a3, a4 = _forward_states(net, y)
    n_elements = y.size

    loss_y = float(np.mean((a4 - y) ** 2))
    if x is None:
        loss_x = float("nan")
        total = cfg.beta * loss_y
    else:
        loss_x = float(np.mean((a1 - x) ** 2))
        total = cfg.alpha * loss_x + cfg.beta * loss_y

    w2, w3, w4 = (net.layers[i].weights for i in (1, 2, 3))
    # reverse-mode pass; g_i is dLoss/dz_i for pre-activations z_i
    g4 = (2.0 * cfg.beta / n_elements) * (a4 - y)
    g3 = (g4 @ w4) * (1.0 - a3**2)
    g2 = (g3 @ w3) * (1.0 - a2**2)
    da1 = g2 @ w2
    if x is not None:
        da1 = da1 + (2.0 * cfg.alpha / n_elements) * (a1 - x)
    g1 = da1 * (1.0 - a1**2)

    inputs = (y, a1, a2, a3)
    grads = [
        LayerGradients(
            d_weights=g.T @ a_in,
            d_bias=g.sum(axis=0),
            trainable=layer.trainable,
        )
        for g, a_in, layer in zip((g1, g2, g3, g4), inputs, net.layers)
    ]
    return LossValues(loss_x=loss_x, loss_y=loss_y, total=total), grads


class _AdamState:
    """First/second gradient moments for one training phase."""

    def __init__(self, net: MlpNetwork):
        self.step = 0
        self.m = [
            (np.zeros_like(l.weights), np.zeros_like(l.bias)) for l in net.layers
        ]
        self.v = [
            (np.zeros_like(l.weights), np.zeros_like(l.bias)) for l in net.layers
        ]

    def update(self, layer_index: int, param: np.ndarray, grad: np.ndarray,
               slot: int, lr: float) -> None:
        m = self.m[layer_index][slot]
        v = self.v[layer_index][slot]
        m *= ADAM_BETA1
        m += (1.0 - ADAM_BETA1) * grad
        v *= ADAM_BETA2
        v += (1.0 - ADAM_BETA2) * grad**2
        m_hat = m / (1.0 - ADAM_BETA1**self.step)
        v_hat = v / (1.0 - ADAM_BETA2**self.step)
        param -= lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)


def _validate_frozen(frozen_layers) -> set[int]:
    frozen = set(int(i) for i in frozen_layers)
    if not frozen <= set(range(1, NUM_LAYERS + 1)):
        raise InvalidArgumentError(
            f"frozen_layers must be a subset of 1..{NUM_LAYERS}, got {sorted(frozen)}"
        )
    return frozen


def train(
    net: MlpNetwork,
    y_windows,
    x_windows,
    cfg: TrainConfig,
    frozen_layers=(),
) -> TrainTrace:
    """Mini-batch training over window datasets; mutates the network in place.

    Windows are shuffled per epoch with a generator seeded from cfg.seed, so
    identical inputs produce bit-identical parameters and trace.  Layers named
    in ``frozen_layers`` (1-based stage indices) and layers whose trainable
    flag is off keep their parameters bit-identical.  Pass ``x_windows=None``
    to train on readings alone (the measurand term drops out of the loss).

    Raises EmptyDatasetError on an empty dataset and DivergenceError if any
    batch loss becomes non-finite.
    """
    y = as_windows(y_windows, width=net.width, name="y_windows")
    if y.shape[0] == 0:
        raise EmptyDatasetError("no training windows provided")
    x = None
    if x_windows is not None:
        x = as_windows(x_windows, width=net.width, name="x_windows")
        if x.shape != y.shape:
            raise InvalidArgumentError(
                f"x windows {x.shape} do not align with y windows {y.shape}"
            )
    frozen = _validate_frozen(frozen_layers)
    frozen |= {i for i, layer in enumerate(net.layers, start=1) if not layer.trainable}

    rng = np.random.default_rng(cfg.seed)
    adam = _AdamState(net) if cfg.optimizer == "adam" else None
    n = y.shape[0]

    epochs = np.arange(1, cfg.epochs + 1)
    trace = TrainTrace(
        epoch=epochs,
        loss_x=np.full(cfg.epochs, np.nan),
        loss_y=np.full(cfg.epochs, np.nan),
        total=np.full(cfg.epochs, np.nan),
    )
    for epoch_index in range(cfg.epochs):
        order = rng.permutation(n)
        sum_x = sum_y = sum_total = 0.0
        for start in range(0, n, cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            losses, grads = loss_and_gradients(
                net, y[batch], None if x is None else x[batch], cfg
            )
            if not np.isfinite(losses.total):
                raise DivergenceError(
                    f"non-finite loss at epoch {epoch_index + 1}; "
                    "lower the learning rate"
                )
            if adam is not None:
                adam.step += 1
            for layer_num, (layer, g) in enumerate(zip(net.layers, grads), start=1):
                if layer_num in frozen:
                    continue
                if adam is not None:
                    adam.update(layer_num - 1, layer.weights, g.d_weights, 0,
                                cfg.learning_rate)
                    adam.update(layer_num - 1, layer.bias, g.d_bias, 1,
                                cfg.learning_rate)
                else:
                    layer.weights -= cfg.learning_rate * g.d_weights
                    layer.bias -= cfg.learning_rate * g.d_bias
            weight = len(batch)
            sum_x += (0.0 if x is None else losses.loss_x) * weight
            sum_y += losses.loss_y * weight
            sum_total += losses.total * weight
        trace.loss_x[epoch_index] = np.nan if x is None else sum_x / n
        trace.loss_y[epoch_index] = sum_y / n
        trace.total[epoch_index] = sum_total / n
    return trace


def make_windows(series, width: int) -> np.ndarray:
    """Cut a series into consecutive non-overlapping complete windows.

    The tail shorter than ``width`` is dropped; training operates on complete
    windows only.
    """
    s = as_series(series, name="series")
    width = int(width)
    n_windows = len(s) // width
    if n_windows == 0:
        return np.empty((0, width))
    return s[: n_windows * width].reshape(n_windows, width)


def calibrate(net: MlpNetwork, y, window_length: int):
    """Apply stage 1 only (readings to measurand estimate) over a full series.

    The series is cut into non-overlapping windows of the network width (the
    final partial window is zero-padded and the padding trimmed from the
    output), so the output length equals the input length.
    """
    y = as_series(y, name="y")
    w = int(window_length)
    if w != net.width:
        raise InvalidArgumentError(
            f"window_length {w} does not match network width {net.width}"
        )
    n_full, remainder = divmod(len(y), w)
    padded = y if remainder == 0 else np.concatenate([y, np.zeros(w - remainder)])
    windows = padded.reshape(-1, w)
    stage1 = net.layers[0]
    out = stage1.apply_activation(windows @ stage1.weights.T + stage1.bias)
    return out.reshape(-1)[: len(y)]


def gradient_check(net: MlpNetwork, y_window, x_window, cfg: TrainConfig,
                   step: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    Perturbs every parameter of every layer by +/- step and compares the
    induced total-loss slope against the analytic gradient.  The relative
    error is |g_fd - g| / max(|g_fd| + |g|, 1e-8).
    """
    _, grads = loss_and_gradients(net, y_window, x_window, cfg)

    def total_loss() -> float:
        losses, _ = loss_and_gradients(net, y_window, x_window, cfg)
        return losses.total

    worst = 0.0
    for layer, g in zip(net.layers, grads):
        for param, analytic in ((layer.weights, g.d_weights),
                                (layer.bias, g.d_bias)):
            flat = param.reshape(-1)
            flat_grad = analytic.reshape(-1)
            for i in range(flat.size):
                saved = flat[i]
                flat[i] = saved + step
                up = total_loss()
                flat[i] = saved - step
                down = total_loss()
                flat[i] = saved
                numeric = (up - down) / (2.0 * step)
                denom = max(abs(numeric) + abs(flat_grad[i]), 1e-8)
                worst = max(worst, abs(numeric - flat_grad[i]) / denom)
    return worst


def gradient_check_suite(num_networks: int = 20, min_width: int = 4,
                         max_width: int = 8, seed: int = 0) -> float:
    """Gradient check over a batch of random small networks and windows.

    Returns the maximum relative error observed.  Used by the acceptance
    suite and the ``gradcheck`` CLI subcommand.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    for i in range(num_networks):
        w = int(rng.integers(min_width, max_width + 1))
        net = init_network(w, seed=int(rng.integers(0, 2**32)))
        y = rng.normal(0.0, 1.0, (2, w))
        x = rng.normal(0.0, 1.0, (2, w))
        cfg = TrainConfig(window_length=w, seed=0)
        # alternate between joint and readings-only supervision
        worst = max(worst, gradient_check(net, y, x if i % 2 == 0 else None, cfg))
    return worst


def save_checkpoint(path, net: MlpNetwork, cfg: TrainConfig) -> None:
    """Write a versioned checkpoint that round-trips bit-exactly."""
    meta = {
        "version": CHECKPOINT_VERSION,
        "width": net.width,
        "activations": [l.activation for l in net.layers],
        "trainable": [l.trainable for l in net.layers],
        "train_config": {
            "alpha": cfg.alpha,
            "beta": cfg.beta,
            "learning_rate": cfg.learning_rate,
            "epochs": cfg.epochs,
            "batch_size": cfg.batch_size,
            "window_length": cfg.window_length,
            "optimizer": cfg.optimizer,
            "seed": cfg.seed,
        },
    }
    arrays = {"meta_json": np.array(json.dumps(meta, sort_keys=True))}
    for i, layer in enumerate(net.layers, start=1):
        arrays[f"weights_{i}"] = layer.weights
        arrays[f"bias_{i}"] = layer.bias
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path):
    """Read a checkpoint written by save_checkpoint; returns (net, cfg)."""
    with np.load(path) as data:
        meta = json.loads(str(data["meta_json"]))
        if meta.get("version") != CHECKPOINT_VERSION:
            raise InvalidArgumentError(
                f"unsupported checkpoint version {meta.get('version')!r}"
            )
        layers = [
            DenseLayer(
                weights=data[f"weights_{i}"],
                bias=data[f"bias_{i}"],
                activation=meta["activations"][i - 1],
                trainable=meta["trainable"][i - 1],
            )
            for i in range(1, NUM_LAYERS + 1)
        ]
    cfg = TrainConfig(**meta["train_config"])
    return MlpNetwork(layers), cfg
