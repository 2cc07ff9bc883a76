"""
Cross-validated hyperparameter selection maximizing ROC-AUC.

The feature pipeline is refit inside every fold on that fold's training
portion, so spam tables and medians never see held-out rows.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Mapping, Sequence

import numpy as np
from pydantic import BaseModel

from detector.models.records import DesignMatrix, RevisionRecord
from detector.models.schemas import (
    CvConfigResult,
    CvResult,
    FeatureConfig,
    FeatureSchema,
    LearnerKind,
    PipelineState,
)
from detector.services.features import apply_pipeline, fit_pipeline
from detector.services.learners import Model, fit_model, score_model
from detector.services.metrics import roc_auc
from detector.utils.errors import CrossValidationError, InvalidConfig
from detector.utils.logger import get_logger

log = get_logger("services.selection")


def _fold_matrices(
    rows: Sequence[RevisionRecord],
    folds: Mapping[str, int],
    k: int,
    schema: FeatureSchema,
    feature_cfg: FeatureConfig,
) -> list[tuple[DesignMatrix, DesignMatrix]]:
    out = []
    for fold in range(k):
        fit_rows = [r for r in rows if folds[r.revision_id] != fold]
        held_rows = [r for r in rows if folds[r.revision_id] == fold]
        try:
            state = fit_pipeline(fit_rows, schema, feature_cfg)
            out.append((apply_pipeline(state, fit_rows), apply_pipeline(state, held_rows)))
        except Exception as exc:
            raise CrossValidationError(-1, fold, exc) from exc
    return out


def cross_validate(
    kind: LearnerKind,
    grid: Sequence[BaseModel],
    rows: Sequence[RevisionRecord],
    folds: Mapping[str, int],
    schema: FeatureSchema,
    feature_cfg: FeatureConfig,
    seed: int,
    threads: int = 1,
) -> CvResult:
    """Score every (config, fold) pair; the best mean fold ROC-AUC wins, ties to grid order."""
    if not grid:
        raise InvalidConfig(f"empty hyperparameter grid for {kind.value}")
    k = max(folds.values()) + 1
    matrices = _fold_matrices(rows, folds, k, schema, feature_cfg)

    def run(job: tuple[int, int]) -> float:
        config_index, fold = job
        fit_matrix, held_matrix = matrices[fold]
        try:
            model = fit_model(kind, fit_matrix, grid[config_index], seed)
            return roc_auc(score_model(model, held_matrix).scores, held_matrix.labels)
        except Exception as exc:
            raise CrossValidationError(config_index, fold, exc) from exc

    jobs = [(c, f) for c in range(len(grid)) for f in range(k)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        aucs = list(pool.map(run, jobs))

    results: list[CvConfigResult] = []
    for c, params in enumerate(grid):
        fold_aucs = aucs[c * k:(c + 1) * k]
        results.append(
            CvConfigResult(
                index=c,
                params=params.model_dump(),
                fold_aucs=fold_aucs,
                mean_auc=float(np.mean(fold_aucs)),
                std_auc=float(np.std(fold_aucs)),
            )
        )
        log.info("%s config #%d %s: ROC-AUC %.4f ± %.4f", kind.tag, c, params.model_dump(), results[-1].mean_auc, results[-1].std_auc)

    best = results[0]
    for r in results[1:]:
        if r.mean_auc > best.mean_auc:
            best = r
    log.info("%s best config #%d (mean ROC-AUC %.4f)", kind.tag, best.index, best.mean_auc)
    return CvResult(
        kind=kind,
        configs=results,
        best_index=best.index,
        best_params=best.params,
        model_tag=kind.tag,
    )


def refit(
    kind: LearnerKind,
    params: BaseModel,
    rows: Sequence[RevisionRecord],
    schema: FeatureSchema,
    feature_cfg: FeatureConfig,
    seed: int,
    threads: int = 1,
    spam_rows: Sequence[RevisionRecord] | None = None,
) -> tuple[PipelineState, Model, DesignMatrix]:
    """Fit pipeline and learner on the full training split."""
    state = fit_pipeline(rows, schema, feature_cfg, spam_rows=spam_rows)
    matrix = apply_pipeline(state, rows)
    model = fit_model(kind, matrix, params, seed, threads=threads)
    return state, model, matrix


def write_cv_result(path, result: CvResult, header=()) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        fh.write(f"# best config #{result.best_index} for {result.model_tag}\n")
        n_folds = len(result.configs[0].fold_aucs)
        fh.write("\t".join(["config", "params", "mean_auc", "std_auc", *(f"fold{i}" for i in range(n_folds))]) + "\n")
        for r in result.configs:
            params = ",".join(f"{k}={v}" for k, v in r.params.items())
            fields = [str(r.index), params, repr(r.mean_auc), repr(r.std_auc), *(repr(a) for a in r.fold_aucs)]
            fh.write("\t".join(fields) + "\n")
