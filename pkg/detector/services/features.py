"""
Feature engineering: missingness-based exclusion, median imputation and
spam-count encoding of categorical features.

Every fitted state comes from training rows only and is frozen afterwards;
validation, test and scoring rows only ever go through `transform`.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np
import pandas as pd

from detector.models.records import DesignMatrix, RevisionRecord
from detector.models.schemas import (
    FeatureConfig,
    FeatureDecl,
    FeatureKind,
    FeatureSchema,
    ImputerState,
    PipelineState,
    SpamStats,
)
from detector.utils.errors import (
    AllMissingFeature,
    EmptyTrainingSet,
    NoFeaturesRetained,
    SchemaMismatch,
    UnlabeledRow,
)
from detector.utils.logger import get_logger

log = get_logger("services.features")


# ── missingness ───────────────────────────────────────

def _frame(rows: Sequence[RevisionRecord], decls: Sequence[FeatureDecl]) -> pd.DataFrame:
    """One object column per declaration; None reads as missing."""
    return pd.DataFrame(
        {d.name: pd.Series([r.values[d.source_index] for r in rows], dtype=object) for d in decls},
        columns=[d.name for d in decls],
    )


def compute_missingness(rows: Sequence[RevisionRecord], schema: FeatureSchema) -> dict[str, float]:
    if not rows:
        raise EmptyTrainingSet("missingness needs at least one training row")
    fraction = _frame(rows, schema.used).isna().mean()
    return {d.name: float(fraction[d.name]) for d in schema.used}


def exclusion_reasons(report: dict[str, float], schema: FeatureSchema, threshold: float = 0.25) -> dict[str, str]:
    reasons: dict[str, str] = {}
    for d in schema.decls:
        if d.kind is FeatureKind.dropped:
            reasons[d.name] = "dropped by schema"
        elif report[d.name] > threshold:
            reasons[d.name] = f"missing {report[d.name]:.4f} > {threshold}"
    return reasons


def select_features(report: dict[str, float], schema: FeatureSchema, threshold: float = 0.25) -> FeatureSchema:
    """Keep non-dropped features missing from at most ``threshold`` of the rows."""
    missing = [d.name for d in schema.used if d.name not in report]
    if missing:
        raise SchemaMismatch(f"missingness report lacks features {missing}")
    retained = schema.subset({d.name for d in schema.used if report[d.name] <= threshold})
    if not len(retained):
        raise NoFeaturesRetained(f"every feature is dropped or missing from more than {threshold:.0%} of training rows")
    return retained


# ── imputation ────────────────────────────────────────

def fit_medians(rows: Sequence[RevisionRecord], retained: FeatureSchema) -> ImputerState:
    numeric = retained.of_kind(FeatureKind.numeric)
    frame = _frame(rows, numeric)
    medians: dict[str, float] = {}
    for d in numeric:
        observed = frame[d.name].dropna().astype(np.float64)
        if observed.empty:
            raise AllMissingFeature(f"feature {d.name!r} has no observed training value")
        # even count: mean of the two middle order statistics
        medians[d.name] = float(observed.median())
    return ImputerState(medians=medians, fitted_on=len(rows))


# ── spam counts ───────────────────────────────────────

def fit_spam_stats(
    rows: Sequence[RevisionRecord],
    feature: str,
    schema: FeatureSchema,
    smoothing: float = 10.0,
) -> SpamStats:
    """Occurrence and spam counts per categorical value over labeled rows."""
    decl = schema.get(feature)
    unlabeled = next((r for r in rows if r.label is None), None)
    if unlabeled is not None:
        raise UnlabeledRow(f"revision {unlabeled.revision_id!r} has no label; spam counts need labels")

    frame = _frame(rows, [decl]).rename(columns={feature: "value"})
    frame["label"] = [int(r.label) for r in rows]
    observed = frame.dropna(subset=["value"])
    table = observed.groupby("value", sort=True)["label"].agg(["count", "sum"])

    if len(observed):
        global_rate = float(observed["label"].sum()) / len(observed)
    else:
        global_rate = float(frame["label"].sum()) / len(rows) if rows else 0.0

    counts = {str(v): (int(n), int(s)) for v, n, s in zip(table.index, table["count"], table["sum"])}
    counts = dict(sorted(counts.items()))
    return SpamStats(feature=feature, counts=counts, global_rate=global_rate, smoothing=smoothing)


# ── transform ─────────────────────────────────────────

def transform(
    rows: Sequence[RevisionRecord],
    retained: FeatureSchema,
    imputer: ImputerState,
    spam: dict[str, SpamStats],
    *,
    source_width: Optional[int] = None,
) -> DesignMatrix:
    """Numeric -> value or training median; categorical -> (spam probability, spam count)."""
    n = len(rows)
    if source_width is not None:
        for r in rows:
            if len(r.values) != source_width:
                raise SchemaMismatch(
                    f"revision {r.revision_id!r} has {len(r.values)} values, schema has {source_width}"
                )

    columns: list[np.ndarray] = []
    for d in retained.used:
        raw = [r.values[d.source_index] for r in rows]
        if d.kind is FeatureKind.numeric:
            if any(isinstance(v, str) for v in raw):
                raise SchemaMismatch(f"numeric feature {d.name!r} holds a categorical value")
            col = np.array([np.nan if v is None else v for v in raw], dtype=np.float64)
            col[np.isnan(col)] = imputer.medians[d.name]
            columns.append(col)
        else:
            stats = spam[d.name]
            cache: dict[Optional[str], tuple[float, float]] = {}
            encoded = np.empty((n, 2), dtype=np.float64)
            for i, v in enumerate(raw):
                if isinstance(v, float):
                    raise SchemaMismatch(f"categorical feature {d.name!r} holds a numeric value")
                if v not in cache:
                    cache[v] = stats.encode(v)
                encoded[i] = cache[v]
            columns.extend([encoded[:, 0], encoded[:, 1]])

    values = np.column_stack(columns) if columns else np.empty((n, 0), dtype=np.float64)
    values = values.reshape(n, len(columns))
    labels = np.array([1 if r.label else 0 for r in rows], dtype=np.int8)
    return DesignMatrix(
        values=values,
        labels=labels,
        row_ids=[r.revision_id for r in rows],
        column_names=retained.column_names(),
    )


# ── pipeline ──────────────────────────────────────────

def fit_pipeline(
    train_rows: Sequence[RevisionRecord],
    schema: FeatureSchema,
    cfg: FeatureConfig,
    spam_rows: Optional[Sequence[RevisionRecord]] = None,
) -> PipelineState:
    """Fit exclusion, medians and spam tables on ``train_rows``.

    ``spam_rows`` overrides the rows spam counts are fitted on (the
    ``spam_fit_scope = sample`` ablation).
    """
    report = compute_missingness(train_rows, schema)
    retained = select_features(report, schema, cfg.missingness_threshold)
    reasons = exclusion_reasons(report, schema, cfg.missingness_threshold)
    imputer = fit_medians(train_rows, retained)
    spam_source = train_rows if spam_rows is None else spam_rows
    spam = {
        d.name: fit_spam_stats(spam_source, d.name, schema, cfg.smoothing)
        for d in retained.of_kind(FeatureKind.categorical)
    }
    log.info("Retained %d of %d features: %s", len(retained), len(schema), ", ".join(retained.names))
    for name, reason in reasons.items():
        log.info("Excluded %s: %s", name, reason)
    return PipelineState(
        source_schema=schema,
        retained=retained,
        missingness=report,
        exclusions=reasons,
        imputer=imputer,
        spam=spam,
        smoothing=cfg.smoothing,
    )


def apply_pipeline(state: PipelineState, rows: Sequence[RevisionRecord]) -> DesignMatrix:
    return transform(rows, state.retained, state.imputer, state.spam, source_width=len(state.source_schema))
