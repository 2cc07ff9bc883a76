"""
Shared pieces of the three learners: class checks, the sigmoid, score clipping.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit

from detector.models.records import DesignMatrix, ScoredOutput
from detector.utils.errors import DimensionMismatch, SingleClassTraining

# scores stay strictly inside (0, 1)
SCORE_EPS = 1e-9


def require_both_classes(matrix: DesignMatrix) -> None:
    if matrix.n_rows == 0:
        raise SingleClassTraining("training matrix is empty")
    positives = int(matrix.labels.sum())
    if positives == 0 or positives == matrix.n_rows:
        raise SingleClassTraining(
            f"training needs both classes, got {positives} positives of {matrix.n_rows} rows"
        )


def require_width(matrix: DesignMatrix, expected: int) -> None:
    if matrix.n_cols != expected:
        raise DimensionMismatch(f"model expects {expected} columns, matrix has {matrix.n_cols}")


def sigmoid(z: np.ndarray) -> np.ndarray:
    return expit(z)


def to_scores(matrix: DesignMatrix, probabilities: np.ndarray) -> ScoredOutput:
    return ScoredOutput(
        row_ids=list(matrix.row_ids),
        scores=np.clip(probabilities, SCORE_EPS, 1.0 - SCORE_EPS),
    )


def normalise(importance: np.ndarray) -> np.ndarray:
    total = importance.sum()
    return importance / total if total > 0 else importance
