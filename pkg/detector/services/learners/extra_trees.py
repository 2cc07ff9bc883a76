"""
Extremely randomized trees for binary classification.

Each tree sees the full training set (no bootstrap). At a node, K features
are drawn without replacement among those not constant on the node, one
cut-point is drawn uniformly inside each feature's (min, max) range, and the
candidate with the largest Gini decrease wins. Trees are grown
independently from per-tree seeds, so the forest is the same for any
number of workers.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from detector.models.records import DesignMatrix, ScoredOutput
from detector.models.schemas import ErtParams, LearnerKind
from detector.services.learners.base import normalise, require_both_classes, require_width, to_scores
from detector.services.learners.trees import TreeArrays, TreeBuilder
from detector.utils.logger import get_logger
from detector.utils.rng import make_rng

log = get_logger("learners.extra_trees")


@dataclass(frozen=True, eq=False)
class ExtraTreesForest:
    trees: list[TreeArrays]
    params: ErtParams
    n_features: int
    seed: int

    kind = LearnerKind.ert

    def feature_importances(self) -> np.ndarray:
        total = np.zeros(self.n_features)
        for tree in self.trees:
            total += tree.importance(self.n_features)
        return normalise(total)


def features_per_split(hp: ErtParams, n_features: int) -> int:
    return hp.features_per_split or max(1, math.ceil(math.sqrt(n_features)))


def _gini(n: int, positives: int) -> float:
    q = positives / n
    return 2.0 * q * (1.0 - q)


def grow_extra_tree(
    X: np.ndarray,
    y: np.ndarray,
    k: int,
    min_samples_leaf: int,
    rng: np.random.Generator,
) -> TreeArrays:
    builder = TreeBuilder()
    root_rows = np.arange(X.shape[0])
    stack = [(builder.add_leaf(y.mean(), len(root_rows)), root_rows)]

    while stack:
        node, rows = stack.pop()
        n = len(rows)
        positives = int(y[rows].sum())
        if positives == 0 or positives == n or n < 2 * min_samples_leaf:
            continue

        Xn = X[rows]
        lo, hi = Xn.min(axis=0), Xn.max(axis=0)
        varying = np.flatnonzero(hi > lo)
        if varying.size == 0:
            continue

        candidates = np.sort(rng.choice(varying, size=min(k, varying.size), replace=False))
        parent = _gini(n, positives)
        best = None  # (decrease, feature, threshold, left mask)
        for f in candidates:
            cut = rng.uniform(lo[f], hi[f])
            if not lo[f] < cut < hi[f]:
                # uniform() is half-open and may round onto an end point
                cut = np.nextafter(lo[f], hi[f])
                if not cut < hi[f]:
                    continue
            goes_left = Xn[:, f] <= cut
            n_left = int(goes_left.sum())
            n_right = n - n_left
            if n_left < min_samples_leaf or n_right < min_samples_leaf:
                continue
            pos_left = int(y[rows[goes_left]].sum())
            decrease = (
                parent
                - n_left / n * _gini(n_left, pos_left)
                - n_right / n * _gini(n_right, positives - pos_left)
            )
            # strict: ties keep the lowest feature index
            if best is None or decrease > best[0]:
                best = (decrease, int(f), float(cut), goes_left)

        if best is None:
            continue
        decrease, f, cut, goes_left = best
        left_rows, right_rows = rows[goes_left], rows[~goes_left]
        left = builder.add_leaf(y[left_rows].mean(), len(left_rows))
        right = builder.add_leaf(y[right_rows].mean(), len(right_rows))
        builder.split(node, f, cut, decrease * n, left, right)
        stack.append((right, right_rows))
        stack.append((left, left_rows))

    return builder.build()


def ert_fit(matrix: DesignMatrix, hp: ErtParams, seed: int, threads: int = 1) -> ExtraTreesForest:
    require_both_classes(matrix)
    X = matrix.values
    y = matrix.labels.astype(np.float64)
    k = features_per_split(hp, matrix.n_cols)

    def grow(t: int) -> TreeArrays:
        return grow_extra_tree(X, y, k, hp.min_samples_leaf, make_rng(seed, f"ert:tree:{t}"))

    with ThreadPoolExecutor(max_workers=threads) as pool:
        trees = list(pool.map(grow, range(hp.n_trees)))

    log.info(
        "ET fitted: %d trees, K=%d, %.0f nodes/tree on %d rows",
        len(trees),
        k,
        np.mean([t.n_nodes for t in trees]),
        matrix.n_rows,
    )
    return ExtraTreesForest(trees=trees, params=hp, n_features=matrix.n_cols, seed=seed)


def ert_score(forest: ExtraTreesForest, matrix: DesignMatrix) -> ScoredOutput:
    require_width(matrix, forest.n_features)
    X = matrix.values
    total = np.zeros(matrix.n_rows)
    for tree in forest.trees:
        total += tree.predict(X)
    return to_scores(matrix, total / len(forest.trees))
