"""Linear predictor m(x; w) = w.x + b trained by momentum gradient descent."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np


class DivergenceError(FloatingPointError):
    """Parameters or gradients became non-finite."""


@dataclass
class Standardizer:
    """Per-feature affine scaling fitted on the training split."""

    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, X) -> "Standardizer":
        X = np.asarray(X, dtype=float)
        mean = X.mean(axis=0)
        scale = X.std(axis=0)
        scale[scale == 0] = 1.0
        return cls(mean, scale)

    @classmethod
    def identity(cls, feature_count: int) -> "Standardizer":
        return cls(np.zeros(feature_count), np.ones(feature_count))

    def transform(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.mean) / self.scale


@dataclass
class LinearModel:
    weights: np.ndarray
    bias: float = 0.0
    standardizer: Optional[Standardizer] = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float).copy()
        self.bias = float(self.bias)

    @classmethod
    def zeros(cls, feature_count: int, standardizer: Optional[Standardizer] = None) -> "LinearModel":
        return cls(np.zeros(feature_count), 0.0, standardizer)

    @property
    def feature_count(self) -> int:
        return self.weights.shape[0]

    def copy(self) -> "LinearModel":
        return LinearModel(self.weights.copy(), self.bias, self.standardizer, dict(self.metadata))

    def predict(self, features) -> np.ndarray:
        """Predict one value per row of ``features`` (already standardized)."""
        X = np.asarray(features, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.feature_count:
            raise ValueError(f"expected {self.feature_count} features, got {X.shape[1]}")
        return X @ self.weights + self.bias

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.weights)) and np.isfinite(self.bias))


@dataclass
class OptimizerState:
    learning_rate: float
    momentum: float = 0.0
    velocity: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")


def parameter_gradient(features, loss_grad) -> np.ndarray:
    """Chain rule through the linear map: mean of g_i [x_i, 1]."""
    X = np.asarray(features, dtype=float)
    g = np.asarray(loss_grad, dtype=float)
    if g.shape != (X.shape[0],):
        raise ValueError(f"loss gradient must have length {X.shape[0]}")
    n = X.shape[0]
    return np.append(g @ X, g.sum()) / n


def apply_gradient(model: LinearModel, state: OptimizerState, features, loss_grad):
    """One heavy-ball step: v <- mu v + grad; params <- params - lr v.

    Updates ``model`` and ``state`` in place and returns both.
    """
    grad = parameter_gradient(features, loss_grad)
    if not np.all(np.isfinite(grad)):
        raise DivergenceError(f"non-finite gradient (norm {np.linalg.norm(grad)})")
    if state.velocity is None:
        state.velocity = np.zeros_like(grad)
    state.velocity = state.momentum * state.velocity + grad
    step = state.learning_rate * state.velocity
    model.weights = model.weights - step[:-1]
    model.bias = float(model.bias - step[-1])
    if not model.is_finite():
        raise DivergenceError("model parameters became non-finite")
    return model, state


def mse_loss(pred, target) -> float:
    """Mean of squared error / 2."""
    d = np.asarray(pred, dtype=float) - np.asarray(target, dtype=float)
    return float(np.mean(d * d) / 2.0)


def mse_gradient(pred, target) -> np.ndarray:
    return np.asarray(pred, dtype=float) - np.asarray(target, dtype=float)


# checkpoints ----------------------------------------------------------------

def model_to_dict(model: LinearModel) -> dict:
    out = {
        "format": "predopt-linear-model/1",
        "feature_count": model.feature_count,
        "weights": [float(w) for w in model.weights],
        "bias": model.bias,
        "standardizer": None,
        "metadata": model.metadata,
    }
    if model.standardizer is not None:
        out["standardizer"] = {"mean": [float(v) for v in model.standardizer.mean],
                               "scale": [float(v) for v in model.standardizer.scale]}
    return out


def model_from_dict(data: dict) -> LinearModel:
    std = None
    if data.get("standardizer"):
        std = Standardizer(np.array(data["standardizer"]["mean"], dtype=float),
                           np.array(data["standardizer"]["scale"], dtype=float))
    model = LinearModel(np.array(data["weights"], dtype=float), data["bias"], std, dict(data.get("metadata", {})))
    if model.feature_count != data["feature_count"]:
        raise ValueError("checkpoint feature_count disagrees with its weights")
    return model


def save_model(model: LinearModel, path):
    with open(path, "w") as fh:
        json.dump(model_to_dict(model), fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_model(path) -> LinearModel:
    with open(path) as fh:
        return model_from_dict(json.load(fh))
