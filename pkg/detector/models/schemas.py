"""
Pydantic v2 models for configuration, fitted pipeline state and reports.
"""

from __future__ import annotations

import itertools
from enum import Enum
from pathlib import Path
from typing import Any, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from detector.config import settings
from detector.utils.errors import InvalidConfig

U64_MAX = 2**64


# ── feature schema ────────────────────────────────────
class FeatureKind(str, Enum):
    numeric = "numeric"
    categorical = "categorical"
    dropped = "dropped"


class FeatureDecl(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str = Field(..., min_length=1)
    kind: FeatureKind
    source_index: int = Field(..., ge=0, description="0-based position among the feature columns")


class FeatureSchema(BaseModel):
    model_config = ConfigDict(frozen=True)

    decls: tuple[FeatureDecl, ...]

    @model_validator(mode="after")
    def _unique(self) -> "FeatureSchema":
        names = [d.name for d in self.decls]
        if len(set(names)) != len(names):
            raise ValueError("feature names must be unique")
        indices = [d.source_index for d in self.decls]
        if len(set(indices)) != len(indices):
            raise ValueError("source indices must be unique")
        return self

    def __len__(self) -> int:
        return len(self.decls)

    @property
    def names(self) -> list[str]:
        return [d.name for d in self.decls]

    def of_kind(self, kind: FeatureKind) -> list[FeatureDecl]:
        return [d for d in self.decls if d.kind is kind]

    @property
    def used(self) -> list[FeatureDecl]:
        return [d for d in self.decls if d.kind is not FeatureKind.dropped]

    def get(self, name: str) -> FeatureDecl:
        for d in self.decls:
            if d.name == name:
                return d
        raise KeyError(name)

    def subset(self, names: set[str]) -> "FeatureSchema":
        return FeatureSchema(decls=tuple(d for d in self.decls if d.name in names))

    def column_names(self) -> list[str]:
        """Design-matrix layout: one column per numeric, two per categorical, schema order."""
        cols: list[str] = []
        for d in self.used:
            if d.kind is FeatureKind.numeric:
                cols.append(d.name)
            else:
                cols.extend([f"{d.name}.spam_prob", f"{d.name}.spam_count"])
        return cols


# ── sampling ──────────────────────────────────────────
class SampleConfig(BaseModel):
    negative_ratio: float = Field(2.5, gt=0)
    train_fraction: float = Field(0.8, gt=0, lt=1)
    k_folds: int = Field(5, ge=2)
    seed: int = Field(0, ge=0, lt=U64_MAX)
    clamp_negatives: bool = False


# ── features ──────────────────────────────────────────
class FeatureConfig(BaseModel):
    missingness_threshold: float = Field(0.25, ge=0, le=1)
    smoothing: float = Field(10.0, ge=0)
    spam_fit_scope: Literal["train", "sample"] = "train"


class ImputerState(BaseModel):
    model_config = ConfigDict(frozen=True)

    medians: dict[str, float]
    fitted_on: int = Field(..., ge=0)


class SpamStats(BaseModel):
    """Per-value occurrence and spam counts for one categorical feature."""

    model_config = ConfigDict(frozen=True)

    feature: str
    counts: dict[str, tuple[int, int]]  # value -> (occurrences n, spam count s)
    global_rate: float = Field(..., ge=0, le=1)
    smoothing: float = Field(10.0, ge=0)

    def probability(self, n: int, s: int) -> float:
        denom = n + self.smoothing
        if denom == 0:
            return self.global_rate
        return (s + self.smoothing * self.global_rate) / denom

    def encode(self, value: Optional[str]) -> tuple[float, float]:
        """(smoothed spam probability, spam count); unseen or missing -> (g, 0)."""
        if value is None or value not in self.counts:
            return self.global_rate, 0.0
        n, s = self.counts[value]
        return self.probability(n, s), float(s)


class PipelineState(BaseModel):
    """Everything the feature stage needs at inference time."""

    model_config = ConfigDict(frozen=True)

    source_schema: FeatureSchema
    retained: FeatureSchema
    missingness: dict[str, float]
    exclusions: dict[str, str]
    imputer: ImputerState
    spam: dict[str, SpamStats]
    smoothing: float

    @property
    def column_names(self) -> list[str]:
        return self.retained.column_names()


# ── learners ──────────────────────────────────────────
class LearnerKind(str, Enum):
    lr = "lr"
    ert = "ert"
    gbt = "gbt"

    @property
    def tag(self) -> str:
        return {"lr": "LR", "ert": "ET", "gbt": "GBT"}[self.value]


class LrParams(BaseModel):
    model_config = ConfigDict(extra="forbid")

    learning_rate: float = Field(0.1, gt=0)
    l2: float = Field(1e-4, ge=0)
    epochs: int = Field(5, ge=0)


class ErtParams(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n_trees: int = Field(300, ge=1)
    features_per_split: Optional[int] = Field(None, ge=1, description="None means ceil(sqrt(d))")
    min_samples_leaf: int = Field(1, ge=1)


class GbtParams(BaseModel):
    model_config = ConfigDict(extra="forbid")

    rounds: int = Field(300, ge=0)
    learning_rate: float = Field(0.1, gt=0)
    max_depth: int = Field(6, ge=0)
    l2: float = Field(1.0, ge=0)
    min_split_gain: float = Field(0.0, ge=0)
    min_child_weight: float = Field(1.0, ge=0)


HYPERPARAMS: dict[LearnerKind, type[BaseModel]] = {
    LearnerKind.lr: LrParams,
    LearnerKind.ert: ErtParams,
    LearnerKind.gbt: GbtParams,
}

DEFAULT_GRIDS: dict[LearnerKind, dict[str, list[Any]]] = {
    LearnerKind.lr: {"learning_rate": [0.01, 0.1], "l2": [1e-5, 1e-4]},
    LearnerKind.ert: {"n_trees": [100, 300], "min_samples_leaf": [1, 5]},
    LearnerKind.gbt: {"max_depth": [4, 6], "learning_rate": [0.05, 0.1], "rounds": [200, 400]},
}


class LearnerConfig(BaseModel):
    """`learner.kind` plus any hyperparameter keys of that kind."""

    model_config = ConfigDict(extra="allow")

    kind: LearnerKind = LearnerKind.gbt

    def params(self, kind: Optional[LearnerKind] = None) -> BaseModel:
        kind = kind or self.kind
        extras = dict(self.model_extra or {})
        if kind is not self.kind:
            extras = {}
        return HYPERPARAMS[kind].model_validate(extras)


class SelectConfig(BaseModel):
    kinds: list[LearnerKind] = Field(default_factory=lambda: [LearnerKind.lr, LearnerKind.ert, LearnerKind.gbt])


class EvalConfig(BaseModel):
    threshold: float = 0.5


class PipelineConfig(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    schema_path: Optional[Path] = None
    data_paths: list[Path] = Field(default_factory=list)
    truth_path: Optional[Path] = None
    seed: int = Field(0, ge=0, lt=U64_MAX)
    output_dir: Path = Path("out")
    threads: int = Field(default_factory=lambda: settings.DEFAULT_THREADS, ge=1)
    skip_bad_rows: bool = False
    has_header: bool = False

    sample: SampleConfig = Field(default_factory=SampleConfig)
    feature: FeatureConfig = Field(default_factory=FeatureConfig)
    learner: LearnerConfig = Field(default_factory=LearnerConfig)
    grid: dict[LearnerKind, dict[str, list[str]]] = Field(default_factory=dict)
    select: SelectConfig = Field(default_factory=SelectConfig)
    evaluation: EvalConfig = Field(default_factory=EvalConfig, alias="eval")

    @model_validator(mode="before")
    @classmethod
    def _seed_flows_into_sample(cls, data: Any) -> Any:
        # one run seed unless the sample section pins its own
        if isinstance(data, dict) and "seed" in data:
            sample = dict(data.get("sample") or {})
            sample.setdefault("seed", data["seed"])
            data = {**data, "sample": sample}
        return data

    @model_validator(mode="after")
    def _learner_params_valid(self) -> "PipelineConfig":
        self.learner.params()
        return self

    @field_validator("grid")
    @classmethod
    def _grid_axes_known(cls, grid: dict[LearnerKind, dict[str, list[str]]]):
        for kind, axes in grid.items():
            fields = HYPERPARAMS[kind].model_fields
            for axis, values in axes.items():
                if axis not in fields:
                    raise ValueError(f"unknown hyperparameter {axis!r} for {kind.value}")
                if not values:
                    raise ValueError(f"empty grid axis {kind.value}.{axis}")
        return grid

    @property
    def sample_path(self) -> Path:
        return self.output_dir / "sample.tsv"

    @property
    def split_path(self) -> Path:
        return self.output_dir / "split.tsv"

    def grid_for(self, kind: LearnerKind) -> list[BaseModel]:
        """Cartesian product of the grid axes, last axis varying fastest."""
        axes = self.grid.get(kind) or DEFAULT_GRIDS[kind]
        base = self.learner.params(kind).model_dump()
        names = list(axes)
        configs = []
        for combo in itertools.product(*(axes[n] for n in names)):
            values = {**base, **dict(zip(names, combo))}
            try:
                configs.append(HYPERPARAMS[kind].model_validate(values))
            except ValidationError as exc:
                raise InvalidConfig(f"invalid grid point for {kind.value} {dict(zip(names, combo))}: {exc}") from exc
        return configs


# ── evaluation ────────────────────────────────────────
class MetricsRow(BaseModel):
    model_tag: str
    roc_auc: float = Field(..., ge=0, le=1)
    pr_auc: float = Field(..., ge=0, le=1)
    accuracy: float = Field(..., ge=0, le=1)
    precision: float = Field(..., ge=0, le=1)
    recall: float = Field(..., ge=0, le=1)
    f1: float = Field(..., ge=0, le=1)
    threshold: float
    prevalence: float = Field(..., ge=0, le=1)


class CvConfigResult(BaseModel):
    index: int
    params: dict[str, Any]
    fold_aucs: list[float]
    mean_auc: float
    std_auc: float


class CvResult(BaseModel):
    kind: LearnerKind
    configs: list[CvConfigResult]
    best_index: int
    best_params: dict[str, Any]
    model_tag: str
