"""
Hot-path record types. Plain dataclasses: millions of these go through the
ingest and sampling loops, so no validation happens per instance.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Optional, Union

import numpy as np

# None is the Missing marker; dropped columns keep their raw token
Value = Union[float, str, None]


@dataclass(frozen=True, slots=True)
class RevisionRecord:
    revision_id: str
    batch_id: str
    values: tuple[Value, ...]
    label: Optional[bool] = None

    def with_label(self, label: Optional[bool]) -> "RevisionRecord":
        return replace(self, label=label)


@dataclass(slots=True)
class BatchEntry:
    batch_id: str
    path: Path
    row_count: int = 0
    positive_count: int = 0
    negative_count: int = 0
    unlabeled_count: int = 0


@dataclass
class BatchManifest:
    batches: list[BatchEntry] = field(default_factory=list)

    def __post_init__(self) -> None:
        ids = [b.batch_id for b in self.batches]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate batch ids in manifest: {ids}")

    def __getitem__(self, batch_id: str) -> BatchEntry:
        for entry in self.batches:
            if entry.batch_id == batch_id:
                return entry
        raise KeyError(batch_id)

    @property
    def batch_ids(self) -> list[str]:
        return [b.batch_id for b in self.batches]

    @property
    def total_rows(self) -> int:
        return sum(b.row_count for b in self.batches)


# ── sampling ──────────────────────────────────────────
@dataclass(frozen=True)
class SamplePlan:
    per_batch_negative_quota: dict[str, int]
    total_positives: int
    total_negatives_target: int


class Role(str, Enum):
    train = "train"
    validation = "validation"


@dataclass
class SplitAssignment:
    roles: dict[str, Role]
    folds: dict[str, int] = field(default_factory=dict)  # train rows only

    def ids(self, role: Role) -> list[str]:
        return [rid for rid, r in self.roles.items() if r is role]


@dataclass
class SampledDataset:
    records: list[RevisionRecord]
    plan: SamplePlan
    negatives_sampled: dict[str, int] = field(default_factory=dict)
    unlabeled_skipped: int = 0

    @property
    def positives(self) -> int:
        return sum(1 for r in self.records if r.label)

    @property
    def negatives(self) -> int:
        return sum(1 for r in self.records if r.label is False)


# ── matrices and scores ───────────────────────────────
@dataclass(frozen=True)
class DesignMatrix:
    values: np.ndarray  # (n, d) float64, finite
    labels: np.ndarray  # (n,) int8 in {0, 1}; all zeros when unlabeled
    row_ids: list[str]
    column_names: list[str]

    def __post_init__(self) -> None:
        n = self.values.shape[0]
        if len(self.labels) != n or len(self.row_ids) != n:
            raise ValueError("labels and row_ids must align with matrix rows")
        if self.values.ndim != 2 or self.values.shape[1] != len(self.column_names):
            raise ValueError("column_names must match the matrix width")

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_cols(self) -> int:
        return self.values.shape[1]

    def take(self, index: np.ndarray) -> "DesignMatrix":
        return DesignMatrix(
            values=self.values[index],
            labels=self.labels[index],
            row_ids=[self.row_ids[i] for i in index],
            column_names=self.column_names,
        )


@dataclass(frozen=True)
class ScoredOutput:
    row_ids: list[str]
    scores: np.ndarray

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.row_ids, self.scores.tolist()))


class CurveKind(str, Enum):
    roc = "roc"
    pr = "pr"


@dataclass(frozen=True)
class CurvePoints:
    kind: CurveKind
    x: np.ndarray  # FPR for ROC, recall for PR
    y: np.ndarray  # TPR for ROC, precision for PR

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.x.tolist(), self.y.tolist()))
