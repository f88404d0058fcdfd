"""One-hidden-layer logistic network with hand-written gradients.

Everything is plain float64 numpy: a logistic hidden layer, a single logistic
output read as an estimate of P(T=1 | man(I=image)), analytic gradients with
respect to both weights and input pixels, and deterministic minibatch descent
with momentum.  The analytic gradients are verified against central finite
differences in the test suite, so keep any change here in lockstep with those
checks.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, DimensionMismatch, NonFiniteLoss

LOSSES = ("squared", "cross-entropy")


def sigmoid(z):
    out = np.empty_like(z, dtype=float)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass
class TrainConfig:
    learning_rate: float = 0.5
    momentum: float = 0.9
    batch_size: int = 32
    epochs: int = 40
    seed: int = 0
    loss: str = "squared"
    # Salt augmentation: each off-pixel turns on with this probability, fresh
    # per batch visit, labels unchanged.  On bar images this is label-safe
    # (extra pixels neither complete nor destroy a bar) and it densely covers
    # the scattered-pixel patterns a manipulation search would otherwise
    # exploit as adversarial holes.
    salt_noise: float = 0.0
    # Inverted dropout on the hidden layer (train-time only).  Discourages the
    # co-adapted activation sums that let precision-tuned non-class patterns
    # outscore genuine class members.
    dropout: float = 0.0
    # Decoupled L2 shrinkage on the weight matrices each step; features with
    # no label signal decay away instead of memorizing sampling noise.
    weight_decay: float = 0.0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError("learning rate must be positive")
        if self.epochs < 1:
            raise ConfigError("epochs must be at least 1")
        if not (0.0 <= self.momentum < 1.0):
            raise ConfigError("momentum must lie in [0, 1)")
        if self.batch_size < 1:
            raise ConfigError("batch size must be at least 1")
        if self.loss not in LOSSES:
            raise ConfigError(f"loss must be one of {LOSSES}")
        if not (0.0 <= self.salt_noise < 0.5):
            raise ConfigError("salt_noise must lie in [0, 0.5)")
        if not (0.0 <= self.dropout < 1.0):
            raise ConfigError("dropout must lie in [0, 1)")
        if self.weight_decay < 0.0:
            raise ConfigError("weight_decay must be non-negative")

    def to_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "momentum": self.momentum,
            "batch_size": self.batch_size,
            "epochs": self.epochs,
            "seed": self.seed,
            "loss": self.loss,
            "salt_noise": self.salt_noise,
            "dropout": self.dropout,
            "weight_decay": self.weight_decay,
        }


@dataclass(frozen=True, eq=False)
class Predictor:
    w1: np.ndarray  # (hidden, input)
    b1: np.ndarray  # (hidden,)
    w2: np.ndarray  # (hidden,)
    b2: float

    @property
    def input_dim(self) -> int:
        return self.w1.shape[1]

    @property
    def hidden_units(self) -> int:
        return self.w1.shape[0]

    def params(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, float]:
        return self.w1, self.b1, self.w2, self.b2


def init_predictor(
    input_dim: int,
    hidden_units: int = 100,
    rng: np.random.Generator | None = None,
) -> Predictor:
    rng = rng if rng is not None else np.random.default_rng(0)
    w1 = rng.standard_normal((hidden_units, input_dim)) / np.sqrt(input_dim)
    b1 = np.zeros(hidden_units)
    w2 = rng.standard_normal(hidden_units) / np.sqrt(hidden_units)
    return Predictor(w1=w1, b1=b1, w2=w2, b2=0.0)


def _check_batch(model: Predictor, X: np.ndarray):
    if X.ndim != 2 or X.shape[1] != model.input_dim:
        raise DimensionMismatch(
            f"expected (n, {model.input_dim}) inputs, got {X.shape}"
        )


def forward_batch(model: Predictor, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    _check_batch(model, X)
    a1 = sigmoid(X @ model.w1.T + model.b1)
    return sigmoid(a1 @ model.w2 + model.b2)


def forward(model: Predictor, image) -> float:
    image = np.asarray(image, dtype=float).ravel()
    if image.shape[0] != model.input_dim:
        raise DimensionMismatch(
            f"expected {model.input_dim} pixels, got {image.shape[0]}"
        )
    return float(forward_batch(model, image[None, :])[0])


@dataclass(frozen=True, eq=False)
class Gradient:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: float
    loss: float

    def norm(self) -> float:
        return float(
            np.sqrt(
                np.sum(self.w1**2)
                + np.sum(self.b1**2)
                + np.sum(self.w2**2)
                + self.b2**2
            )
        )


def batch_loss(model: Predictor, X, y, loss: str = "squared") -> float:
    f = forward_batch(model, np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    if loss == "squared":
        return float(np.mean((f - y) ** 2))
    eps = 1e-12
    return float(-np.mean(y * np.log(f + eps) + (1 - y) * np.log(1 - f + eps)))


def weight_gradient(
    model: Predictor, X, y, loss: str = "squared", hidden_mask=None
) -> Gradient:
    """Analytic gradient of the mean loss over the batch.  ``hidden_mask``
    (an inverted-dropout mask, same shape as the hidden activations) is only
    supplied during training."""
    if loss not in LOSSES:
        raise ConfigError(f"loss must be one of {LOSSES}")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or len(X) == 0:
        raise DimensionMismatch("batch must be a non-empty (n, d) array")
    _check_batch(model, X)
    n = len(X)

    z1 = X @ model.w1.T + model.b1
    a1 = sigmoid(z1)
    if hidden_mask is not None:
        a1 = a1 * hidden_mask
    f = sigmoid(a1 @ model.w2 + model.b2)

    if loss == "squared":
        value = float(np.mean((f - y) ** 2))
        g2 = 2.0 * (f - y) * f * (1.0 - f) / n
    else:
        eps = 1e-12
        value = float(-np.mean(y * np.log(f + eps) + (1 - y) * np.log(1 - f + eps)))
        g2 = (f - y) / n

    dw2 = a1.T @ g2
    db2 = float(g2.sum())
    da1 = np.outer(g2, model.w2)
    if hidden_mask is not None:
        da1 = da1 * hidden_mask
        raw_a1 = sigmoid(z1)
        dz1 = da1 * raw_a1 * (1.0 - raw_a1)
    else:
        dz1 = da1 * a1 * (1.0 - a1)
    dw1 = dz1.T @ X
    db1 = dz1.sum(axis=0)
    return Gradient(w1=dw1, b1=db1, w2=dw2, b2=db2, loss=value)


@dataclass(frozen=True)
class ManipulationObjective:
    """(1 - tradeoff) * |C(j) - target| + tradeoff * ||j - anchor||^2.

    The distance term is squared L2 inside the optimizer; reported
    manipulation distances use plain L2 (see the pipeline module).
    """

    target: float
    anchor: np.ndarray
    tradeoff: float

    def __post_init__(self):
        if not (0.0 <= self.tradeoff <= 1.0):
            raise ConfigError("tradeoff must lie in [0, 1]")
        if not (0.0 <= self.target <= 1.0):
            raise ConfigError("target must lie in [0, 1]")
        object.__setattr__(self, "anchor", np.asarray(self.anchor, dtype=float).ravel())


def objective_value(model: Predictor, image, objective: ManipulationObjective) -> float:
    j = np.asarray(image, dtype=float).ravel()
    f = forward(model, j)
    dist = float(np.sum((j - objective.anchor) ** 2))
    return (1.0 - objective.tradeoff) * abs(f - objective.target) + objective.tradeoff * dist


def input_gradient(model: Predictor, image, objective: ManipulationObjective) -> np.ndarray:
    """Gradient of the manipulation objective with respect to the (relaxed)
    image.  The absolute value uses the sign subgradient, zero at the kink."""
    j = np.asarray(image, dtype=float).ravel()
    if j.shape[0] != model.input_dim:
        raise DimensionMismatch(
            f"expected {model.input_dim} pixels, got {j.shape[0]}"
        )
    if objective.anchor.shape[0] != j.shape[0]:
        raise DimensionMismatch("anchor and image sizes differ")
    z1 = model.w1 @ j + model.b1
    a1 = sigmoid(z1)
    f = float(sigmoid(np.array([a1 @ model.w2 + model.b2]))[0])
    grad_f = f * (1.0 - f) * (model.w1.T @ (model.w2 * a1 * (1.0 - a1)))
    diff = f - objective.target
    sign = 0.0 if diff == 0.0 else (1.0 if diff > 0.0 else -1.0)
    return (1.0 - objective.tradeoff) * sign * grad_f + 2.0 * objective.tradeoff * (
        j - objective.anchor
    )


def input_gradient_batch(
    model: Predictor,
    J: np.ndarray,
    targets: np.ndarray,
    anchors: np.ndarray,
    tradeoff: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized objective gradient for a batch of relaxed images.
    Returns (gradients, objective values)."""
    z1 = J @ model.w1.T + model.b1
    a1 = sigmoid(z1)
    f = sigmoid(a1 @ model.w2 + model.b2)
    grad_f = (f * (1.0 - f))[:, None] * ((a1 * (1.0 - a1)) * model.w2 @ model.w1)
    diff = f - targets
    sign = np.sign(diff)
    grads = (1.0 - tradeoff) * sign[:, None] * grad_f + 2.0 * tradeoff * (J - anchors)
    values = (1.0 - tradeoff) * np.abs(diff) + tradeoff * np.sum(
        (J - anchors) ** 2, axis=1
    )
    return grads, values


@dataclass
class TrainResult:
    model: Predictor
    epoch_losses: list[float] = field(default_factory=list)
    warning: str | None = None


def train(model: Predictor, X, y, config: TrainConfig) -> TrainResult:
    """Minibatch gradient descent with momentum; bit-reproducible from
    (seed, dataset order, config)."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    _check_batch(model, X)
    if len(X) != len(y):
        raise DimensionMismatch("inputs and targets differ in length")
    if y.min() < 0.0 or y.max() > 1.0:
        raise ConfigError("targets must lie in [0, 1]")

    rng = np.random.default_rng(config.seed)
    w1 = model.w1.copy()
    b1 = model.b1.copy()
    w2 = model.w2.copy()
    b2 = model.b2
    v_w1 = np.zeros_like(w1)
    v_b1 = np.zeros_like(b1)
    v_w2 = np.zeros_like(w2)
    v_b2 = 0.0

    n = len(X)
    epoch_losses: list[float] = []
    current = Predictor(w1=w1, b1=b1, w2=w2, b2=b2)
    for epoch in range(config.epochs):
        perm = rng.permutation(n)
        losses = []
        for start in range(0, n, config.batch_size):
            idx = perm[start : start + config.batch_size]
            Xb = X[idx]
            if config.salt_noise > 0.0:
                salt = rng.random(Xb.shape) < config.salt_noise
                Xb = np.maximum(Xb, salt.astype(float))
            mask = None
            if config.dropout > 0.0:
                keep = rng.random((len(Xb), current.hidden_units)) >= config.dropout
                mask = keep / (1.0 - config.dropout)
            grad = weight_gradient(current, Xb, y[idx], config.loss, mask)
            if not np.isfinite(grad.loss):
                raise NonFiniteLoss(
                    f"loss became non-finite at epoch {epoch}, batch offset {start}"
                )
            v_w1 = config.momentum * v_w1 - config.learning_rate * grad.w1
            v_b1 = config.momentum * v_b1 - config.learning_rate * grad.b1
            v_w2 = config.momentum * v_w2 - config.learning_rate * grad.w2
            v_b2 = config.momentum * v_b2 - config.learning_rate * grad.b2
            if config.weight_decay > 0.0:
                shrink = 1.0 - config.learning_rate * config.weight_decay
                w1 = w1 * shrink
                w2 = w2 * shrink
            w1 = w1 + v_w1
            b1 = b1 + v_b1
            w2 = w2 + v_w2
            b2 = b2 + v_b2
            current = Predictor(w1=w1, b1=b1, w2=w2, b2=b2)
            losses.append(grad.loss)
        epoch_losses.append(float(np.mean(losses)))

    warning = None
    if epoch_losses[-1] > epoch_losses[0]:
        warning = (
            f"non-decreasing loss: first epoch {epoch_losses[0]:.6g}, "
            f"last epoch {epoch_losses[-1]:.6g}"
        )
    return TrainResult(model=current, epoch_losses=epoch_losses, warning=warning)
