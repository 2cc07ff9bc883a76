"""
The three learners behind one fit/score surface.
"""

from __future__ import annotations

from typing import Union

import numpy as np
from pydantic import BaseModel

from detector.models.records import DesignMatrix, ScoredOutput
from detector.models.schemas import LearnerKind
from detector.services.learners.boosting import GbtEnsemble, gbt_fit, gbt_score
from detector.services.learners.extra_trees import ExtraTreesForest, ert_fit, ert_score
from detector.services.learners.linear import LinearModel, lr_fit, lr_score

Model = Union[LinearModel, ExtraTreesForest, GbtEnsemble]


def fit_model(kind: LearnerKind, matrix: DesignMatrix, params: BaseModel, seed: int, threads: int = 1) -> Model:
    if kind is LearnerKind.lr:
        return lr_fit(matrix, params, seed)
    if kind is LearnerKind.ert:
        return ert_fit(matrix, params, seed, threads=threads)
    return gbt_fit(matrix, params, seed)


def score_model(model: Model, matrix: DesignMatrix) -> ScoredOutput:
    if isinstance(model, LinearModel):
        return lr_score(model, matrix)
    if isinstance(model, ExtraTreesForest):
        return ert_score(model, matrix)
    return gbt_score(model, matrix)


def feature_importances(model: Model, column_names: list[str]) -> list[tuple[str, float]]:
    """(column, normalised importance), most important first; ties keep column order."""
    values = model.feature_importances()
    order = np.argsort(-values, kind="stable")
    return [(column_names[i], float(values[i])) for i in order]


__all__ = [
    "Model",
    "LinearModel",
    "ExtraTreesForest",
    "GbtEnsemble",
    "fit_model",
    "score_model",
    "feature_importances",
    "lr_fit",
    "lr_score",
    "ert_fit",
    "ert_score",
    "gbt_fit",
    "gbt_score",
]
