"""
Second-order gradient boosted trees on the logistic loss.

Per round: g = p - y, h = p(1 - p) at the current margins. Trees are grown
depth-first by exact greedy search over sorted feature values:

    gain = 1/2 [G_L^2/(H_L+l2) + G_R^2/(H_R+l2) - G^2/(H+l2)] - min_split_gain

A split is kept only when gain > 0 and both children reach min_child_weight
in hessian mass. Leaf weight = -eta * G / (H + l2); stored weights already
include the shrinkage, so scoring is sigmoid(base_score + sum of leaves).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from detector.models.records import DesignMatrix, ScoredOutput
from detector.models.schemas import GbtParams, LearnerKind
from detector.services.learners.base import (
    normalise,
    require_both_classes,
    require_width,
    sigmoid,
    to_scores,
)
from detector.services.learners.trees import TreeArrays, TreeBuilder
from detector.utils.errors import NonFiniteMargin
from detector.utils.logger import get_logger

log = get_logger("learners.boosting")


@dataclass(frozen=True, eq=False)
class GbtEnsemble:
    base_score: float
    trees: list[TreeArrays]
    params: GbtParams
    n_features: int
    seed: int
    loss_history: tuple[float, ...] = field(default=(), compare=False)

    kind = LearnerKind.gbt

    def margin(self, X: np.ndarray) -> np.ndarray:
        out = np.full(X.shape[0], self.base_score)
        for tree in self.trees:
            out += tree.predict(X)
        return out

    def feature_importances(self) -> np.ndarray:
        total = np.zeros(self.n_features)
        for tree in self.trees:
            total += tree.importance(self.n_features)
        return normalise(total)


# ── formulas ──────────────────────────────────────────

def _score_term(G, H, l2):
    with np.errstate(divide="ignore", invalid="ignore"):
        term = np.square(G) / (H + l2)
    return np.where(np.isfinite(term), term, 0.0)


def split_gain(G_L, H_L, G_R, H_R, l2: float, min_split_gain: float = 0.0):
    return 0.5 * (
        _score_term(G_L, H_L, l2) + _score_term(G_R, H_R, l2) - _score_term(G_L + G_R, H_L + H_R, l2)
    ) - min_split_gain


def leaf_weight(G: float, H: float, l2: float, learning_rate: float) -> float:
    if H + l2 == 0:
        return 0.0
    return -learning_rate * G / (H + l2)


def logloss(y: np.ndarray, margin: np.ndarray) -> float:
    return float(np.mean(np.logaddexp(0.0, margin) - y * margin))


# ── tree growing ──────────────────────────────────────

def best_split(
    X: np.ndarray, g: np.ndarray, h: np.ndarray, hp: GbtParams
) -> Optional[tuple[float, int, float]]:
    """(gain, feature, threshold) of the best positive-gain split, or None.

    Ties go to the lowest feature index, then the lowest threshold.
    """
    G, H = g.sum(), h.sum()
    best: Optional[tuple[float, int, float]] = None
    for f in range(X.shape[1]):
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        distinct = xs[:-1] < xs[1:]
        if not distinct.any():
            continue
        G_L = np.cumsum(g[order])[:-1]
        H_L = np.cumsum(h[order])[:-1]
        H_R = H - H_L
        gains = split_gain(G_L, H_L, G - G_L, H_R, hp.l2, hp.min_split_gain)
        allowed = distinct & (H_L >= hp.min_child_weight) & (H_R >= hp.min_child_weight)
        gains = np.where(allowed, gains, -np.inf)
        i = int(np.argmax(gains))
        if gains[i] > 0 and (best is None or gains[i] > best[0]):
            lo, hi = xs[i], xs[i + 1]
            threshold = lo + (hi - lo) / 2
            if threshold >= hi:
                threshold = lo
            best = (float(gains[i]), f, float(threshold))
    return best


def grow_boosted_tree(X: np.ndarray, g: np.ndarray, h: np.ndarray, hp: GbtParams) -> TreeArrays:
    builder = TreeBuilder()

    def leaf(rows: np.ndarray) -> int:
        return builder.add_leaf(leaf_weight(g[rows].sum(), h[rows].sum(), hp.l2, hp.learning_rate), len(rows))

    root_rows = np.arange(X.shape[0])
    stack = [(leaf(root_rows), root_rows, 0)]
    while stack:
        node, rows, depth = stack.pop()
        if depth >= hp.max_depth or len(rows) < 2:
            continue
        found = best_split(X[rows], g[rows], h[rows], hp)
        if found is None:
            continue
        gain, f, threshold = found
        goes_left = X[rows, f] <= threshold
        left_rows, right_rows = rows[goes_left], rows[~goes_left]
        left, right = leaf(left_rows), leaf(right_rows)
        builder.split(node, f, threshold, gain, left, right)
        stack.append((right, right_rows, depth + 1))
        stack.append((left, left_rows, depth + 1))
    return builder.build()


# ── fit / score ───────────────────────────────────────

def gbt_fit(matrix: DesignMatrix, hp: GbtParams, seed: int) -> GbtEnsemble:
    require_both_classes(matrix)
    X = matrix.values
    y = matrix.labels.astype(np.float64)
    prior = y.mean()
    base_score = math.log(prior / (1.0 - prior))

    margin = np.full(matrix.n_rows, base_score)
    trees: list[TreeArrays] = []
    history = [logloss(y, margin)]
    for r in range(hp.rounds):
        p = sigmoid(margin)
        g = p - y
        h = p * (1.0 - p)
        tree = grow_boosted_tree(X, g, h, hp)
        margin = margin + tree.predict(X)
        if not np.isfinite(margin).all():
            raise NonFiniteMargin(f"margins became non-finite at round {r + 1}")
        trees.append(tree)
        history.append(logloss(y, margin))
        if (r + 1) % 50 == 0:
            log.debug("GBT round %d/%d train logloss=%.6f", r + 1, hp.rounds, history[-1])

    log.info("GBT fitted: %d rounds, train logloss %.5f -> %.5f", hp.rounds, history[0], history[-1])
    return GbtEnsemble(
        base_score=base_score,
        trees=trees,
        params=hp,
        n_features=matrix.n_cols,
        seed=seed,
        loss_history=tuple(history),
    )


def gbt_score(ensemble: GbtEnsemble, matrix: DesignMatrix) -> ScoredOutput:
    require_width(matrix, ensemble.n_features)
    return to_scores(matrix, sigmoid(ensemble.margin(matrix.values)))
