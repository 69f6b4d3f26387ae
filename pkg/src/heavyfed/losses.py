"""Loss models: per-sample losses and gradients plus empirical risk.

Three model families are supported: linear regression under quadratic loss,
logistic regression with labels in {-1, +1}, and a one-hidden-layer tanh
network with either a squared or a logistic output objective.  All gradients
are exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, EmptyInput, InvalidConfig

MODEL_KINDS = ("linear", "logistic", "mlp")
MLP_OBJECTIVES = ("squared", "logistic")


@dataclass(frozen=True)
class LossModel:
    """Model family plus the shape information that sizes the parameter vector.

    For the network, the parameter vector packs, in order: input weights
    (hidden x features, row major), hidden biases, output weights, output
    bias -- so dim = (features + 1) * hidden + hidden + 1.
    """

    kind: str
    features: int
    hidden: int = 8
    objective: str = "squared"

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise InvalidConfig(f"unknown model kind {self.kind!r}")
        if self.features < 1:
            raise InvalidConfig(f"feature count must be >= 1, got {self.features}")
        if self.kind == "mlp":
            if self.hidden < 1:
                raise InvalidConfig(f"hidden width must be >= 1, got {self.hidden}")
            if self.objective not in MLP_OBJECTIVES:
                raise InvalidConfig(f"unknown mlp objective {self.objective!r}")

    @property
    def dim(self) -> int:
        if self.kind == "mlp":
            return (self.features + 1) * self.hidden + self.hidden + 1
        return self.features


@dataclass
class Dataset:
    """Feature matrix plus labels; rows are samples."""

    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        self.labels = np.asarray(self.labels, dtype=float)
        if self.features.ndim != 2 or self.labels.ndim != 1:
            raise DimensionMismatch("features must be (n, p) and labels (n,)")
        if self.features.shape[0] != self.labels.shape[0]:
            raise DimensionMismatch(
                f"{self.features.shape[0]} feature rows vs {self.labels.shape[0]} labels"
            )
        if self.features.size and not (
            np.all(np.isfinite(self.features)) and np.all(np.isfinite(self.labels))
        ):
            raise ValueError("dataset entries must be finite")

    def __len__(self) -> int:
        return self.labels.shape[0]

    def take(self, indices) -> "Dataset":
        return Dataset(self.features[indices], self.labels[indices])


def _sigmoid(t):
    out = np.empty_like(t, dtype=float)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    e = np.exp(t[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _check(model, w, data):
    w = np.asarray(w, dtype=float)
    if w.shape != (model.dim,):
        raise DimensionMismatch(f"parameter vector has shape {w.shape}, model needs ({model.dim},)")
    if data.features.shape[1] != model.features:
        raise DimensionMismatch(
            f"dataset has {data.features.shape[1]} features, model expects {model.features}"
        )
    return w


def _unpack_mlp(model, w):
    h, p = model.hidden, model.features
    w1 = w[: h * p].reshape(h, p)
    b1 = w[h * p : h * p + h]
    w2 = w[h * p + h : h * p + 2 * h]
    b2 = w[-1]
    return w1, b1, w2, b2


def per_sample_losses(model: LossModel, w, data: Dataset) -> np.ndarray:
    """Vector of the loss at each sample."""
    w = _check(model, w, data)
    X, y = data.features, data.labels
    if model.kind == "linear":
        return 0.5 * (y - X @ w) ** 2
    if model.kind == "logistic":
        return np.logaddexp(0.0, -y * (X @ w))
    w1, b1, w2, b2 = _unpack_mlp(model, w)
    out = np.tanh(X @ w1.T + b1) @ w2 + b2
    if model.objective == "squared":
        return 0.5 * (y - out) ** 2
    return np.logaddexp(0.0, -y * out)


def per_sample_gradients(model: LossModel, w, data: Dataset) -> np.ndarray:
    """Matrix of per-sample loss gradients, one row per sample."""
    if len(data) == 0:
        raise EmptyInput("per_sample_gradients needs a non-empty dataset")
    w = _check(model, w, data)
    X, y = data.features, data.labels
    if model.kind == "linear":
        return (X @ w - y)[:, None] * X
    if model.kind == "logistic":
        return (-y * _sigmoid(-y * (X @ w)))[:, None] * X
    w1, b1, w2, b2 = _unpack_mlp(model, w)
    hid = np.tanh(X @ w1.T + b1)
    out = hid @ w2 + b2
    if model.objective == "squared":
        err = out - y
    else:
        err = -y * _sigmoid(-y * out)
    back = err[:, None] * (w2 * (1.0 - hid**2))
    n = X.shape[0]
    g_w1 = (back[:, :, None] * X[:, None, :]).reshape(n, -1)
    return np.concatenate([g_w1, back, err[:, None] * hid, err[:, None]], axis=1)


def per_sample_gradient(model: LossModel, w, z) -> np.ndarray:
    """Gradient of the loss at a single sample ``z = (x, y)``."""
    x, y = z
    single = Dataset(np.atleast_2d(np.asarray(x, dtype=float)), np.array([y], dtype=float))
    return per_sample_gradients(model, w, single)[0]


def per_sample_loss(model: LossModel, w, z) -> float:
    """Loss at a single sample ``z = (x, y)``."""
    x, y = z
    single = Dataset(np.atleast_2d(np.asarray(x, dtype=float)), np.array([y], dtype=float))
    return float(per_sample_losses(model, w, single)[0])


def empirical_risk(model: LossModel, w, data: Dataset) -> float:
    """Mean per-sample loss over the dataset."""
    if len(data) == 0:
        raise EmptyInput("empirical_risk needs a non-empty dataset")
    return float(per_sample_losses(model, w, data).mean())
