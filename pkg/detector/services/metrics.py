"""
Ranking and thresholded metrics for binary vandalism scores.

ROC and the confusion-based metrics come from sklearn.metrics. Average
precision stays local because its ranking breaks score ties by row id.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from sklearn import metrics

from detector.models.records import CurveKind, CurvePoints
from detector.utils.errors import MisalignedScores, NoPositives, SingleClassInput


def _as_arrays(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels).astype(bool)
    if s.shape != y.shape or s.ndim != 1:
        raise MisalignedScores(f"{s.shape[0] if s.ndim else 0} scores for {y.size} labels")
    return s, y


def _class_counts(y: np.ndarray) -> tuple[int, int]:
    positives = int(y.sum())
    negatives = int(y.size - positives)
    if positives == 0 or negatives == 0:
        raise SingleClassInput(f"need both classes, got {positives} positives and {negatives} negatives")
    return positives, negatives


# ── ROC ───────────────────────────────────────────────

def roc_auc(scores, labels) -> float:
    """Mann-Whitney statistic; tied positive/negative pairs count one half."""
    s, y = _as_arrays(scores, labels)
    _class_counts(y)
    return float(metrics.roc_auc_score(y.astype(np.int8), s))


def roc_curve(scores, labels) -> CurvePoints:
    """One point per distinct threshold, descending, from (0, 0) to (1, 1)."""
    s, y = _as_arrays(scores, labels)
    _class_counts(y)
    fpr, tpr, _ = metrics.roc_curve(y.astype(np.int8), s, drop_intermediate=False)
    if fpr[0] != 0.0 or tpr[0] != 0.0:
        fpr, tpr = np.r_[0.0, fpr], np.r_[0.0, tpr]
    if fpr[-1] != 1.0 or tpr[-1] != 1.0:
        fpr, tpr = np.r_[fpr, 1.0], np.r_[tpr, 1.0]
    return CurvePoints(kind=CurveKind.roc, x=fpr.astype(np.float64), y=tpr.astype(np.float64))


def trapezoid_area(curve: CurvePoints) -> float:
    return float(metrics.auc(curve.x, curve.y))


# ── precision / recall ────────────────────────────────

def _threshold_sweep(s: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Cumulative (true positives, false positives) at each distinct score, descending."""
    order = np.argsort(-s, kind="stable")
    s_sorted, y_sorted = s[order], y[order]
    last_of_group = np.r_[np.flatnonzero(s_sorted[:-1] != s_sorted[1:]), s_sorted.size - 1]
    tps = np.cumsum(y_sorted)[last_of_group]
    fps = (last_of_group + 1) - tps
    return tps.astype(np.float64), fps.astype(np.float64)


def pr_auc(scores, labels, row_ids: Optional[Sequence[str]] = None) -> float:
    """Average precision: mean precision at the rank of each positive.

    Ranking is by descending score; equal scores are ordered by row id
    (or by position when no ids are given).
    """
    s, y = _as_arrays(scores, labels)
    positives = int(y.sum())
    if positives == 0:
        raise NoPositives("average precision needs at least one positive")
    tiebreak = np.arange(s.size) if row_ids is None else np.asarray(row_ids)
    if tiebreak.size != s.size:
        raise MisalignedScores(f"{tiebreak.size} row ids for {s.size} scores")
    order = np.lexsort((tiebreak, -s))
    hits = y[order]
    ranks = np.flatnonzero(hits) + 1
    precision_at_hits = np.arange(1, positives + 1) / ranks
    return float(precision_at_hits.sum() / positives)


def pr_curve(scores, labels) -> CurvePoints:
    s, y = _as_arrays(scores, labels)
    positives = int(y.sum())
    if positives == 0:
        raise NoPositives("precision/recall curve needs at least one positive")
    tps, fps = _threshold_sweep(s, y)
    recall = np.r_[0.0, tps / positives]
    precision = np.r_[1.0, tps / (tps + fps)]
    return CurvePoints(kind=CurveKind.pr, x=recall, y=precision)


# ── thresholded ───────────────────────────────────────

@dataclass(frozen=True)
class ConfusionMetrics:
    threshold: float
    tp: int
    fp: int
    tn: int
    fn: int
    accuracy: float
    precision: float
    recall: float
    f1: float

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def confusion_metrics(scores, labels, threshold: float = 0.5) -> ConfusionMetrics:
    """Predict vandalism iff score >= threshold; undefined ratios read 0."""
    s, y = _as_arrays(scores, labels)
    truth = y.astype(np.int8)
    predicted = (s >= threshold).astype(np.int8)
    if not truth.size:
        return ConfusionMetrics(threshold, 0, 0, 0, 0, 0.0, 0.0, 0.0, 0.0)
    tn, fp, fn, tp = metrics.confusion_matrix(truth, predicted, labels=[0, 1]).ravel()
    precision, recall, f1, _ = metrics.precision_recall_fscore_support(
        truth, predicted, pos_label=1, average="binary", zero_division=0
    )
    return ConfusionMetrics(
        threshold=threshold,
        tp=int(tp),
        fp=int(fp),
        tn=int(tn),
        fn=int(fn),
        accuracy=float(metrics.accuracy_score(truth, predicted)),
        precision=float(precision),
        recall=float(recall),
        f1=float(f1),
    )
