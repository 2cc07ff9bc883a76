"""
Logistic regression fitted by per-example stochastic gradient descent.

Objective over standardized features x~:

    (1/n) * sum_i logloss(sigmoid(w.x~_i + b), y_i) + (l2 / 2) * ||w||^2

Step size eta_t = eta0 / (1 + eta0 * l2 * t), t counting examples seen.
Per-epoch loss decreases monotonically on small problems while
eta0 <= 1 / (n * (max_i ||x~_i||^2 / 4 + l2)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from detector.models.records import DesignMatrix, ScoredOutput
from detector.models.schemas import LearnerKind, LrParams
from detector.services.learners.base import (
    normalise,
    require_both_classes,
    require_width,
    sigmoid,
    to_scores,
)
from detector.utils.errors import NonFiniteLoss
from detector.utils.logger import get_logger
from detector.utils.rng import make_rng

log = get_logger("learners.linear")


@dataclass(frozen=True, eq=False)
class LinearModel:
    weights: np.ndarray
    bias: float
    means: np.ndarray
    stds: np.ndarray
    params: LrParams
    seed: int
    loss_history: tuple[float, ...] = field(default=(), compare=False)

    kind = LearnerKind.lr

    @property
    def n_features(self) -> int:
        return len(self.weights)

    def standardize(self, X: np.ndarray) -> np.ndarray:
        return (X - self.means) / self.stds

    def feature_importances(self) -> np.ndarray:
        return normalise(np.abs(self.weights))


def fit_standardization(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    means = X.mean(axis=0)
    stds = X.std(axis=0)
    # constant columns standardize to 0 and keep a zero weight
    stds[~(stds > 0)] = 1.0
    return means, stds


def lr_loss_and_grad(
    w: np.ndarray, b: float, Xs: np.ndarray, y: np.ndarray, l2: float
) -> tuple[float, np.ndarray, float]:
    """Full-batch regularized loss and its gradient w.r.t. (w, b)."""
    z = Xs @ w + b
    loss = float(np.mean(np.logaddexp(0.0, z) - y * z) + 0.5 * l2 * (w @ w))
    residual = sigmoid(z) - y
    grad_w = Xs.T @ residual / len(y) + l2 * w
    grad_b = float(residual.mean())
    return loss, grad_w, grad_b


def lr_fit(matrix: DesignMatrix, hp: LrParams, seed: int) -> LinearModel:
    require_both_classes(matrix)
    X = matrix.values
    y = matrix.labels.astype(np.float64)
    means, stds = fit_standardization(X)
    Xs = (X - means) / stds
    n, d = Xs.shape

    w = np.zeros(d)
    b = 0.0
    eta0, l2 = hp.learning_rate, hp.l2
    rng = make_rng(seed, "lr:shuffle")
    history: list[float] = []
    t = 0

    for epoch in range(hp.epochs):
        for i in rng.permutation(n):
            eta = eta0 / (1.0 + eta0 * l2 * t)
            xi = Xs[i]
            z = float(xi @ w) + b
            residual = 1.0 / (1.0 + math.exp(-z)) if z >= 0 else math.exp(z) / (1.0 + math.exp(z))
            residual -= y[i]
            w -= eta * (residual * xi + l2 * w)
            b -= eta * residual
            t += 1

        loss, _, _ = lr_loss_and_grad(w, b, Xs, y, l2)
        if not math.isfinite(loss):
            raise NonFiniteLoss(
                f"loss diverged at epoch {epoch + 1} (learning_rate={eta0}, l2={l2}); lower the learning rate"
            )
        history.append(loss)
        log.debug("LR epoch %d/%d loss=%.6f", epoch + 1, hp.epochs, loss)

    return LinearModel(
        weights=w, bias=b, means=means, stds=stds, params=hp, seed=seed, loss_history=tuple(history)
    )


def lr_score(model: LinearModel, matrix: DesignMatrix) -> ScoredOutput:
    require_width(matrix, model.n_features)
    z = model.standardize(matrix.values) @ model.weights + model.bias
    return to_scores(matrix, sigmoid(z))
