"""
Subcommand bodies. Each takes a validated PipelineConfig, reads and writes
files under `cfg.output_dir`, and raises DetectorError subclasses that the
entry point turns into exit codes.
"""

from __future__ import annotations

from pathlib import Path
from typing import Optional, Sequence

from detector import __version__
from detector.config import config_digest
from detector.models.records import CurveKind, RevisionRecord, Role, SplitAssignment
from detector.models.schemas import FeatureSchema, LearnerKind, PipelineConfig, PipelineState
from detector.services.artifact import ModelArtifact, build_artifact, load_artifact, save_artifact
from detector.services.features import apply_pipeline
from detector.services.ingest import RecordStream, join_labels, load_schema, load_truth, read_dataset, scan_batches, write_dataset
from detector.services.learners import Model, feature_importances, score_model
from detector.services.reporting import (
    EvaluationReport,
    evaluate_models,
    plot_curves,
    write_curve,
    write_report,
    write_scores,
)
from detector.services.sampling import assign_splits, read_split, subsample, write_split
from detector.services.selection import cross_validate, refit, write_cv_result
from detector.services.synthetic import generate_corpus
from detector.utils.errors import DataError, InvalidConfig, MissingPath, SchemaMismatch
from detector.utils.logger import attach_run_log, detach_run_log, get_logger

log = get_logger("cli.commands")

SCORE_CHUNK = 10_000


# ── helpers ───────────────────────────────────────────

def _require(*paths: Optional[Path], what: str = "input") -> None:
    for path in paths:
        if path is None:
            raise MissingPath(f"no {what} path configured")
        if not Path(path).exists():
            raise MissingPath(f"{what} not found: {path}")


def _header(cfg: PipelineConfig, command: str) -> list[str]:
    return [
        f"detector {__version__} {command}",
        f"seed = {cfg.seed}",
        f"config_digest = {config_digest(cfg)}",
    ]


def _output_dir(cfg: PipelineConfig) -> Path:
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    return cfg.output_dir


def _partition(
    rows: Sequence[RevisionRecord], split: SplitAssignment
) -> tuple[list[RevisionRecord], list[RevisionRecord]]:
    train, validation = [], []
    for r in rows:
        role = split.roles.get(r.revision_id)
        if role is None:
            raise DataError(f"revision {r.revision_id!r} is missing from the split sidecar")
        (train if role is Role.train else validation).append(r)
    return train, validation


def _load_sample(cfg: PipelineConfig, schema: FeatureSchema):
    _require(cfg.sample_path, cfg.split_path, what="sampled dataset")
    rows = read_dataset(cfg.sample_path, schema)
    split = read_split(cfg.split_path)
    train, validation = _partition(rows, split)
    log.info("Loaded sample: %d train rows, %d validation rows", len(train), len(validation))
    return rows, split, train, validation


def _write_importances(path: Path, model: Model, state: PipelineState, header: list[str]) -> None:
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        fh.write("column\timportance\n")
        for column, value in feature_importances(model, state.column_names):
            fh.write(f"{column}\t{value!r}\n")


def _save_model(
    cfg: PipelineConfig,
    command: str,
    kind: LearnerKind,
    model: Model,
    state: PipelineState,
    train: Sequence[RevisionRecord],
    validation: Sequence[RevisionRecord],
) -> Path:
    out = _output_dir(cfg)
    artifact = build_artifact(
        model,
        state,
        seed=cfg.seed,
        config_digest=config_digest(cfg),
        row_counts={
            "train": len(train),
            "train_positives": sum(1 for r in train if r.label),
            "validation": len(validation),
        },
    )
    path = out / f"model-{kind.value}.json"
    save_artifact(path, artifact)
    _write_importances(out / f"importance-{kind.tag}.tsv", model, state, _header(cfg, command))
    return path


# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
#  sample: subsample negatives, split, assign folds
# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━

def cmd_sample(cfg: PipelineConfig) -> dict[str, Path]:
    _require(cfg.schema_path, what="schema")
    _require(cfg.truth_path, what="truth file")
    if not cfg.data_paths:
        raise InvalidConfig("no data_paths configured")
    _require(*cfg.data_paths, what="batch file")

    schema = load_schema(cfg.schema_path)
    truth = load_truth(cfg.truth_path)

    # pass 1: row and label counts per batch
    manifest, stream = scan_batches(
        cfg.data_paths, schema, skip_bad_rows=cfg.skip_bad_rows, has_header=cfg.has_header
    )
    counting = join_labels(stream, truth, manifest)
    for _ in counting:
        pass
    log.info(
        "Scanned %d rows: %d labeled positives, %d labeled negatives, %d unlabeled",
        manifest.total_rows,
        sum(b.positive_count for b in manifest.batches),
        sum(b.negative_count for b in manifest.batches),
        counting.unlabeled_count,
    )

    # pass 2: reservoirs
    second = RecordStream(manifest, schema, skip_bad_rows=cfg.skip_bad_rows, has_header=cfg.has_header)
    dataset = subsample(join_labels(second, truth), manifest, cfg.sample)
    split = assign_splits(dataset.records, cfg.sample)

    out = _output_dir(cfg)
    header = _header(cfg, "sample")
    write_dataset(cfg.sample_path, dataset.records, schema, header)
    write_split(cfg.split_path, split, header)

    summary_path = out / "sample_summary.tsv"
    sampled_pos = {b: 0 for b in manifest.batch_ids}
    for r in dataset.records:
        if r.label:
            sampled_pos[r.batch_id] += 1
    with summary_path.open("w", encoding="utf-8", newline="\n") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        fh.write("batch_id\trows\tpositives\tnegatives\tunlabeled\tnegative_quota\tsampled_positives\tsampled_negatives\n")
        for b in manifest.batches:
            fh.write(
                f"{b.batch_id}\t{b.row_count}\t{b.positive_count}\t{b.negative_count}\t{b.unlabeled_count}\t"
                f"{dataset.plan.per_batch_negative_quota[b.batch_id]}\t{sampled_pos[b.batch_id]}\t"
                f"{dataset.negatives_sampled[b.batch_id]}\n"
            )
        fh.write(
            f"total\t{manifest.total_rows}\t{sum(b.positive_count for b in manifest.batches)}\t"
            f"{sum(b.negative_count for b in manifest.batches)}\t{sum(b.unlabeled_count for b in manifest.batches)}\t"
            f"{dataset.plan.total_negatives_target}\t{dataset.positives}\t{dataset.negatives}\n"
        )

    log.info("Wrote %d sampled rows to %s", len(dataset.records), cfg.sample_path)
    return {"sample": cfg.sample_path, "split": cfg.split_path, "summary": summary_path}


# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
#  train: fit the pipeline and the configured learner
# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━

def cmd_train(cfg: PipelineConfig) -> Path:
    _require(cfg.schema_path, what="schema")
    schema = load_schema(cfg.schema_path)
    rows, _, train, validation = _load_sample(cfg, schema)
    kind = cfg.learner.kind

    handler = attach_run_log(_output_dir(cfg) / "train.log")
    try:
        log.info("Training %s with %s", kind.tag, cfg.learner.params().model_dump())
        spam_rows = rows if cfg.feature.spam_fit_scope == "sample" else None
        state, model, _ = refit(
            kind, cfg.learner.params(), train, schema, cfg.feature, cfg.seed, cfg.threads, spam_rows
        )
        return _save_model(cfg, "train", kind, model, state, train, validation)
    finally:
        detach_run_log(handler)


# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
#  select: k-fold grid search per learner, refit winners
# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━

def cmd_select(cfg: PipelineConfig) -> dict[LearnerKind, Path]:
    _require(cfg.schema_path, what="schema")
    schema = load_schema(cfg.schema_path)
    rows, split, train, validation = _load_sample(cfg, schema)
    out = _output_dir(cfg)
    header = _header(cfg, "select")

    artifacts: dict[LearnerKind, Path] = {}
    handler = attach_run_log(out / "train.log")
    try:
        for kind in cfg.select.kinds:
            grid = cfg.grid_for(kind)
            log.info("Cross-validating %s over %d configs", kind.tag, len(grid))
            result = cross_validate(kind, grid, train, split.folds, schema, cfg.feature, cfg.seed, cfg.threads)
            write_cv_result(out / f"cv-{kind.value}.tsv", result, header)

            spam_rows = rows if cfg.feature.spam_fit_scope == "sample" else None
            state, model, _ = refit(
                kind, grid[result.best_index], train, schema, cfg.feature, cfg.seed, cfg.threads, spam_rows
            )
            artifacts[kind] = _save_model(cfg, "select", kind, model, state, train, validation)
    finally:
        detach_run_log(handler)
    return artifacts


# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
#  evaluate: compare artifacts on labeled rows
# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━

def _shared_schema(artifacts: Sequence[ModelArtifact]) -> FeatureSchema:
    schema = artifacts[0].pipeline.source_schema
    for a in artifacts[1:]:
        if a.pipeline.source_schema != schema:
            raise SchemaMismatch("artifacts were trained on different raw schemas")
    return schema


def _external_rows(cfg: PipelineConfig, schema: FeatureSchema, data_paths, truth_path) -> list[RevisionRecord]:
    _require(*data_paths, what="batch file")
    _require(truth_path, what="truth file")
    _, stream = scan_batches(data_paths, schema, skip_bad_rows=cfg.skip_bad_rows, has_header=cfg.has_header)
    joined = join_labels(stream, truth_path)
    rows = [r for r in joined if r.label is not None]
    if joined.unlabeled_count:
        log.warning("%d revisions without a truth label were left out of the evaluation", joined.unlabeled_count)
    return rows


def cmd_evaluate(
    cfg: PipelineConfig,
    artifact_paths: Sequence[Path],
    *,
    data_paths: Sequence[Path] = (),
    truth_path: Optional[Path] = None,
    layout: Optional[str] = None,
) -> EvaluationReport:
    _require(*artifact_paths, what="artifact")
    loaded = [load_artifact(p) for p in artifact_paths]
    tags = [a.model_tag for a, _ in loaded]
    if len(set(tags)) != len(tags):
        raise InvalidConfig(f"artifacts share model tags: {tags}")
    schema = _shared_schema([a for a, _ in loaded])

    if data_paths:
        rows = _external_rows(cfg, schema, data_paths, truth_path or cfg.truth_path)
        layout = layout or "test"
    else:
        _, _, _, rows = _load_sample(cfg, schema)
        layout = layout or "validation"

    row_ids = [r.revision_id for r in rows]
    labels = [bool(r.label) for r in rows]
    scored = []
    for artifact, model in loaded:
        matrix = apply_pipeline(artifact.pipeline, rows)
        scored.append((artifact.model_tag, score_model(model, matrix).scores))

    report = evaluate_models(scored, labels, row_ids=row_ids, threshold=cfg.evaluation.threshold)

    out = _output_dir(cfg)
    header = _header(cfg, "evaluate")
    write_report(out / "report.tsv", report.rows, layout, header)
    for tag, scores in scored:
        roc, pr = report.curves[tag]
        write_curve(out / f"roc-{tag}.tsv", roc, header)
        write_curve(out / f"pr-{tag}.tsv", pr, header)
        write_scores(out / f"scores-{tag}.tsv", row_ids, scores, header)
    plot_curves(out / "roc.svg", report, CurveKind.roc, header)
    plot_curves(out / "pr.svg", report, CurveKind.pr, header)

    print(report.selected)
    return report


# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
#  score: vandalism scores for unlabeled revisions
# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━

def cmd_score(
    cfg: PipelineConfig,
    artifact_path: Path,
    data_paths: Sequence[Path],
    out_path: Optional[Path] = None,
) -> Path:
    _require(artifact_path, what="artifact")
    _require(*data_paths, what="batch file")
    artifact, model = load_artifact(artifact_path)
    schema = artifact.pipeline.source_schema
    _, stream = scan_batches(data_paths, schema, skip_bad_rows=cfg.skip_bad_rows, has_header=cfg.has_header)

    out_path = out_path or _output_dir(cfg) / "scores.tsv"
    written = 0
    with Path(out_path).open("w", encoding="utf-8", newline="\n") as fh:
        for line in _header(cfg, "score") + [f"model = {artifact.model_tag}"]:
            fh.write(f"# {line}\n")

        def flush(chunk: list[RevisionRecord]) -> int:
            matrix = apply_pipeline(artifact.pipeline, chunk)
            scores = score_model(model, matrix).scores
            for rid, score in zip(matrix.row_ids, scores.tolist()):
                fh.write(f"{rid}\t{score:.6f}\n")
            return len(chunk)

        chunk: list[RevisionRecord] = []
        for record in stream:
            chunk.append(record)
            if len(chunk) == SCORE_CHUNK:
                written += flush(chunk)
                chunk = []
        if chunk:
            written += flush(chunk)

    log.info("Scored %d revisions with %s -> %s", written, artifact.model_tag, out_path)
    return Path(out_path)


# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
#  synth: write the synthetic corpus
# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━

def cmd_synth(out_dir: Path, *, n_rows: int = 5000, n_batches: int = 3, seed: int = 0) -> dict:
    return generate_corpus(out_dir, n_rows=n_rows, n_batches=n_batches, seed=seed)
