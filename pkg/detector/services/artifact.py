"""
Versioned model artifact: fitted feature pipeline plus learner payload,
stored as indented JSON with `format_version` as the first key.

Floats are written in shortest round-trip form, so save -> load -> save
reproduces the file byte for byte.
"""

from __future__ import annotations

import json
from datetime import datetime, timezone
from pathlib import Path
from typing import Annotated, Literal, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from detector.config import settings
from detector.models.schemas import ErtParams, GbtParams, LrParams, PipelineState
from detector.services.learners import ExtraTreesForest, GbtEnsemble, LinearModel, Model
from detector.services.learners.trees import TreeArrays
from detector.utils.errors import ArtifactFormatError, ArtifactVersionError, MissingPath
from detector.utils.logger import get_logger

log = get_logger("services.artifact")

FORMAT_VERSION = 1


# ── payloads ──────────────────────────────────────────
class TreePayload(BaseModel):
    feature: list[int]
    threshold: list[float]
    left: list[int]
    right: list[int]
    value: list[float]
    n_samples: list[int]
    gain: list[float]

    @classmethod
    def from_tree(cls, tree: TreeArrays) -> "TreePayload":
        return cls(
            feature=tree.feature.tolist(),
            threshold=tree.threshold.tolist(),
            left=tree.left.tolist(),
            right=tree.right.tolist(),
            value=tree.value.tolist(),
            n_samples=tree.n_samples.tolist(),
            gain=tree.gain.tolist(),
        )

    def to_tree(self) -> TreeArrays:
        return TreeArrays(
            feature=np.asarray(self.feature, dtype=np.int64),
            threshold=np.asarray(self.threshold, dtype=np.float64),
            left=np.asarray(self.left, dtype=np.int64),
            right=np.asarray(self.right, dtype=np.int64),
            value=np.asarray(self.value, dtype=np.float64),
            n_samples=np.asarray(self.n_samples, dtype=np.int64),
            gain=np.asarray(self.gain, dtype=np.float64),
        )


class LinearPayload(BaseModel):
    kind: Literal["lr"] = "lr"
    params: LrParams
    seed: int
    weights: list[float]
    bias: float
    means: list[float]
    stds: list[float]
    loss_history: list[float] = Field(default_factory=list)


class ForestPayload(BaseModel):
    kind: Literal["ert"] = "ert"
    params: ErtParams
    seed: int
    n_features: int
    trees: list[TreePayload]


class BoostingPayload(BaseModel):
    kind: Literal["gbt"] = "gbt"
    params: GbtParams
    seed: int
    n_features: int
    base_score: float
    trees: list[TreePayload]
    loss_history: list[float] = Field(default_factory=list)


LearnerPayload = Annotated[
    Union[LinearPayload, ForestPayload, BoostingPayload],
    Field(discriminator="kind"),
]


class Provenance(BaseModel):
    seed: int
    config_digest: str
    row_counts: dict[str, int]
    created_at: str


class ModelArtifact(BaseModel):
    model_config = ConfigDict(protected_namespaces=())

    format_version: int = FORMAT_VERSION
    model_tag: str
    pipeline: PipelineState
    learner: LearnerPayload
    provenance: Provenance


# ── conversion ────────────────────────────────────────

def to_payload(model: Model) -> LinearPayload | ForestPayload | BoostingPayload:
    if isinstance(model, LinearModel):
        return LinearPayload(
            params=model.params,
            seed=model.seed,
            weights=model.weights.tolist(),
            bias=float(model.bias),
            means=model.means.tolist(),
            stds=model.stds.tolist(),
            loss_history=list(model.loss_history),
        )
    if isinstance(model, ExtraTreesForest):
        return ForestPayload(
            params=model.params,
            seed=model.seed,
            n_features=model.n_features,
            trees=[TreePayload.from_tree(t) for t in model.trees],
        )
    return BoostingPayload(
        params=model.params,
        seed=model.seed,
        n_features=model.n_features,
        base_score=float(model.base_score),
        trees=[TreePayload.from_tree(t) for t in model.trees],
        loss_history=list(model.loss_history),
    )


def from_payload(payload: LinearPayload | ForestPayload | BoostingPayload) -> Model:
    if isinstance(payload, LinearPayload):
        return LinearModel(
            weights=np.asarray(payload.weights, dtype=np.float64),
            bias=payload.bias,
            means=np.asarray(payload.means, dtype=np.float64),
            stds=np.asarray(payload.stds, dtype=np.float64),
            params=payload.params,
            seed=payload.seed,
            loss_history=tuple(payload.loss_history),
        )
    if isinstance(payload, ForestPayload):
        return ExtraTreesForest(
            trees=[t.to_tree() for t in payload.trees],
            params=payload.params,
            n_features=payload.n_features,
            seed=payload.seed,
        )
    return GbtEnsemble(
        base_score=payload.base_score,
        trees=[t.to_tree() for t in payload.trees],
        params=payload.params,
        n_features=payload.n_features,
        seed=payload.seed,
        loss_history=tuple(payload.loss_history),
    )


def creation_timestamp() -> str:
    """Epoch 0 unless SOURCE_DATE_EPOCH overrides it; never the wall clock."""
    seconds = int(settings.SOURCE_DATE_EPOCH) if settings.SOURCE_DATE_EPOCH else 0
    moment = datetime.fromtimestamp(seconds, tz=timezone.utc)
    return moment.strftime("%Y-%m-%dT%H:%M:%SZ")


def build_artifact(
    model: Model,
    state: PipelineState,
    *,
    seed: int,
    config_digest: str,
    row_counts: dict[str, int],
) -> ModelArtifact:
    return ModelArtifact(
        model_tag=model.kind.tag,
        pipeline=state,
        learner=to_payload(model),
        provenance=Provenance(
            seed=seed,
            config_digest=config_digest,
            row_counts=row_counts,
            created_at=creation_timestamp(),
        ),
    )


# ── persistence ───────────────────────────────────────

def dump_artifact(artifact: ModelArtifact) -> str:
    return artifact.model_dump_json(indent=1) + "\n"


def save_artifact(path: str | Path, artifact: ModelArtifact) -> None:
    Path(path).write_text(dump_artifact(artifact), encoding="utf-8", newline="\n")
    log.info("Saved %s artifact to %s", artifact.model_tag, path)


def load_artifact(path: str | Path) -> tuple[ModelArtifact, Model]:
    path = Path(path)
    if not path.is_file():
        raise MissingPath(f"artifact not found: {path}")
    text = path.read_text(encoding="utf-8")
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ArtifactFormatError(f"{path}: not a model artifact ({exc})") from exc

    version = raw.get("format_version") if isinstance(raw, dict) else None
    if version != FORMAT_VERSION:
        raise ArtifactVersionError(f"{path}: format_version {version!r}, expected {FORMAT_VERSION}")

    try:
        artifact = ModelArtifact.model_validate(raw)
    except ValidationError as exc:
        raise ArtifactFormatError(f"{path}: malformed artifact: {exc}") from exc

    model = from_payload(artifact.learner)
    log.info("Loaded %s artifact from %s", artifact.model_tag, path)
    return artifact, model
