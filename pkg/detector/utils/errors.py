"""
Exception hierarchy. Each family carries the process exit code the CLI uses.
"""

from __future__ import annotations


class DetectorError(Exception):
    exit_code: int = 1


# ── families ──────────────────────────────────────────

class ConfigError(DetectorError):
    exit_code = 2


class DataError(DetectorError):
    exit_code = 3


class TrainingError(DetectorError):
    exit_code = 4


class ArtifactError(DetectorError):
    exit_code = 5


# ── configuration / schema ────────────────────────────

class InvalidConfig(ConfigError):
    pass


class MissingPath(ConfigError):
    pass


class DuplicateFeature(ConfigError):
    pass


class UnknownKind(ConfigError):
    pass


class EmptySchema(ConfigError):
    pass


# ── ingestion ─────────────────────────────────────────

class ColumnCountMismatch(DataError):
    pass


class NonFiniteNumeric(DataError):
    pass


class UnparsableNumeric(DataError):
    pass


class MalformedTruthLine(DataError):
    pass


class DuplicateTruthEntry(DataError):
    pass


class RowError(DataError):
    """A row-level error annotated with where it happened."""

    def __init__(self, batch_id: str, line_number: int, cause: DataError):
        self.batch_id = batch_id
        self.line_number = line_number
        self.cause = cause
        super().__init__(f"batch {batch_id!r} line {line_number}: {cause}")


# ── sampling ──────────────────────────────────────────

class InsufficientNegatives(DataError):
    pass


class DegenerateSplit(DataError):
    pass


class TooFewMinoritySamples(DataError):
    pass


# ── features ──────────────────────────────────────────

class EmptyTrainingSet(DataError):
    pass


class NoFeaturesRetained(DataError):
    pass


class AllMissingFeature(DataError):
    pass


class UnlabeledRow(DataError):
    pass


class SchemaMismatch(DataError):
    pass


# ── evaluation ────────────────────────────────────────

class SingleClassInput(DataError):
    pass


class NoPositives(DataError):
    pass


class MisalignedScores(DataError):
    pass


# ── learners ──────────────────────────────────────────

class SingleClassTraining(TrainingError):
    pass


class NonFiniteLoss(TrainingError):
    pass


class NonFiniteMargin(TrainingError):
    pass


class DimensionMismatch(TrainingError):
    pass


class CrossValidationError(TrainingError):
    def __init__(self, config_index: int, fold: int, cause: Exception):
        self.config_index = config_index
        self.fold = fold
        self.cause = cause
        if isinstance(cause, DetectorError):
            self.exit_code = cause.exit_code
        super().__init__(f"config #{config_index} fold {fold}: {cause}")


# ── artifacts ─────────────────────────────────────────

class ArtifactVersionError(ArtifactError):
    pass


class ArtifactFormatError(ArtifactError):
    pass
