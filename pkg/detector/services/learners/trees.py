"""
Flat array storage for binary decision trees, shared by both tree learners.

Node i is a leaf when feature[i] == -1. Rows with x[feature] <= threshold
go left.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LEAF = -1


@dataclass(frozen=True, eq=False)
class TreeArrays:
    feature: np.ndarray  # int64, LEAF for leaves
    threshold: np.ndarray  # float64
    left: np.ndarray  # int64
    right: np.ndarray  # int64
    value: np.ndarray  # float64: positive fraction (ET) or leaf weight (GBT)
    n_samples: np.ndarray  # int64
    gain: np.ndarray  # float64: split quality, 0 at leaves

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def predict(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = np.flatnonzero(self.feature[node] != LEAF)
        while active.size:
            current = node[active]
            feat = self.feature[current]
            go_left = X[active, feat] <= self.threshold[current]
            node[active] = np.where(go_left, self.left[current], self.right[current])
            active = active[self.feature[node[active]] != LEAF]
        return self.value[node]

    def importance(self, n_features: int) -> np.ndarray:
        out = np.zeros(n_features)
        internal = self.feature != LEAF
        np.add.at(out, self.feature[internal], self.gain[internal])
        return out


class TreeBuilder:
    """Append-only node store used while growing a tree."""

    def __init__(self) -> None:
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list[float] = []
        self.n_samples: list[int] = []
        self.gain: list[float] = []

    def add_leaf(self, value: float, n_samples: int) -> int:
        self.feature.append(LEAF)
        self.threshold.append(0.0)
        self.left.append(LEAF)
        self.right.append(LEAF)
        self.value.append(float(value))
        self.n_samples.append(int(n_samples))
        self.gain.append(0.0)
        return len(self.feature) - 1

    def split(self, node: int, feature: int, threshold: float, gain: float, left: int, right: int) -> None:
        self.feature[node] = int(feature)
        self.threshold[node] = float(threshold)
        self.gain[node] = float(gain)
        self.left[node] = left
        self.right[node] = right

    def build(self) -> TreeArrays:
        return TreeArrays(
            feature=np.asarray(self.feature, dtype=np.int64),
            threshold=np.asarray(self.threshold, dtype=np.float64),
            left=np.asarray(self.left, dtype=np.int64),
            right=np.asarray(self.right, dtype=np.int64),
            value=np.asarray(self.value, dtype=np.float64),
            n_samples=np.asarray(self.n_samples, dtype=np.int64),
            gain=np.asarray(self.gain, dtype=np.float64),
        )
