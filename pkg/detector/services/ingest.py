"""
Batch-file ingestion: schema files, revision feature rows, truth files.

Row format (UTF-8, tab-separated, no quoting):

    revision_id <TAB> feature_0 <TAB> ... <TAB> feature_{k-1}

`NA` or an empty field is a missing value in any column.
"""

from __future__ import annotations

import math
import re
from pathlib import Path
from typing import Iterable, Iterator, Optional

from detector.models.records import BatchEntry, BatchManifest, RevisionRecord, Value
from detector.models.schemas import FeatureDecl, FeatureKind, FeatureSchema
from detector.utils.errors import (
    ColumnCountMismatch,
    DataError,
    DuplicateFeature,
    DuplicateTruthEntry,
    EmptySchema,
    InvalidConfig,
    MalformedTruthLine,
    MissingPath,
    NonFiniteNumeric,
    RowError,
    UnknownKind,
    UnparsableNumeric,
)
from detector.utils.logger import get_logger

log = get_logger("services.ingest")

MISSING_TOKEN = "NA"

KIND_TOKENS = {
    "num": FeatureKind.numeric,
    "numeric": FeatureKind.numeric,
    "cat": FeatureKind.categorical,
    "categorical": FeatureKind.categorical,
    "drop": FeatureKind.dropped,
    "dropped": FeatureKind.dropped,
}

_DECIMAL = re.compile(r"[+-]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?")
_NON_FINITE = {"inf", "+inf", "-inf", "infinity", "+infinity", "-infinity", "nan", "+nan", "-nan"}


# ── schema ────────────────────────────────────────────

def load_schema(path: str | Path) -> FeatureSchema:
    """One `name<TAB>kind` declaration per line, in column order."""
    path = Path(path)
    if not path.is_file():
        raise MissingPath(f"schema file not found: {path}")

    decls: list[FeatureDecl] = []
    seen: set[str] = set()
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t") if "\t" in line else line.split()
        if len(parts) != 2:
            raise InvalidConfig(f"{path}:{lineno}: expected `name<TAB>kind`, got {raw!r}")
        name, kind_token = parts[0].strip(), parts[1].strip().lower()
        if kind_token not in KIND_TOKENS:
            raise UnknownKind(f"{path}:{lineno}: unknown feature kind {parts[1]!r}")
        if name in seen:
            raise DuplicateFeature(f"{path}:{lineno}: feature {name!r} declared twice")
        seen.add(name)
        decls.append(FeatureDecl(name=name, kind=KIND_TOKENS[kind_token], source_index=len(decls)))

    if not decls:
        raise EmptySchema(f"schema file declares no features: {path}")

    schema = FeatureSchema(decls=tuple(decls))
    log.info(
        "Loaded schema %s: %d numeric, %d categorical, %d dropped",
        path.name,
        len(schema.of_kind(FeatureKind.numeric)),
        len(schema.of_kind(FeatureKind.categorical)),
        len(schema.of_kind(FeatureKind.dropped)),
    )
    return schema


# ── rows ──────────────────────────────────────────────

def parse_value(token: str, kind: FeatureKind) -> Value:
    if token == "" or token == MISSING_TOKEN:
        return None
    if kind is FeatureKind.numeric:
        if token.lower() in _NON_FINITE:
            raise NonFiniteNumeric(f"non-finite numeric value {token!r}")
        if not _DECIMAL.fullmatch(token):
            raise UnparsableNumeric(f"cannot parse {token!r} as a decimal number")
        value = float(token)
        if not math.isfinite(value):
            raise NonFiniteNumeric(f"numeric value {token!r} overflows")
        return value
    return token


def parse_revision_row(line: str, schema: FeatureSchema, batch_id: str) -> RevisionRecord:
    fields = line.rstrip("\r\n").split("\t")
    if len(fields) != len(schema) + 1:
        raise ColumnCountMismatch(
            f"expected {len(schema) + 1} columns (id + {len(schema)} features), got {len(fields)}"
        )
    revision_id = fields[0]
    if revision_id == "" or revision_id == MISSING_TOKEN:
        raise DataError("missing revision id")
    values = tuple(parse_value(fields[d.source_index + 1], d.kind) for d in schema.decls)
    return RevisionRecord(revision_id=revision_id, batch_id=batch_id, values=values)


def format_value(value: Value) -> str:
    if value is None:
        return MISSING_TOKEN
    if isinstance(value, float):
        return repr(value)
    return value


def format_revision_row(record: RevisionRecord) -> str:
    """Inverse of parse_revision_row (without the trailing newline)."""
    return "\t".join([record.revision_id, *(format_value(v) for v in record.values)])


# ── truth ─────────────────────────────────────────────

def load_truth(path: str | Path) -> dict[str, bool]:
    path = Path(path)
    if not path.is_file():
        raise MissingPath(f"truth file not found: {path}")

    truth: dict[str, bool] = {}
    with path.open(encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\r\n")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            token = parts[1].strip().lower() if len(parts) == 2 else ""
            if len(parts) != 2 or not parts[0] or token not in ("true", "false"):
                raise MalformedTruthLine(f"{path}:{lineno}: expected `revision_id<TAB>true|false`, got {line!r}")
            label = token == "true"
            previous = truth.get(parts[0])
            if previous is not None and previous != label:
                raise DuplicateTruthEntry(f"{path}:{lineno}: conflicting labels for revision {parts[0]!r}")
            truth[parts[0]] = label

    log.info("Loaded %d truth labels (%d positive) from %s", len(truth), sum(truth.values()), path.name)
    return truth


class LabelJoin:
    """Streams records with labels from the truth map; counts the unlabeled."""

    def __init__(
        self,
        records: Iterable[RevisionRecord],
        truth: dict[str, bool],
        manifest: Optional[BatchManifest] = None,
    ):
        self._records = records
        self._truth = truth
        self._manifest = manifest
        self.labeled_count = 0
        self.unlabeled_count = 0

    def __iter__(self) -> Iterator[RevisionRecord]:
        entries = {b.batch_id: b for b in self._manifest.batches} if self._manifest else {}
        for record in self._records:
            label = self._truth.get(record.revision_id)
            entry = entries.get(record.batch_id)
            if label is None:
                self.unlabeled_count += 1
                if entry is not None:
                    entry.unlabeled_count += 1
            else:
                self.labeled_count += 1
                if entry is not None:
                    if label:
                        entry.positive_count += 1
                    else:
                        entry.negative_count += 1
            yield record.with_label(label)


def join_labels(
    records: Iterable[RevisionRecord],
    truth: str | Path | dict[str, bool],
    manifest: Optional[BatchManifest] = None,
) -> LabelJoin:
    """Attach labels; pass the manifest to also collect per-batch label counts."""
    if not isinstance(truth, dict):
        truth = load_truth(truth)
    return LabelJoin(records, truth, manifest)


# ── batches ───────────────────────────────────────────

class RecordStream:
    """Lazily parses batch files in manifest order, one row at a time."""

    def __init__(
        self,
        manifest: BatchManifest,
        schema: FeatureSchema,
        *,
        skip_bad_rows: bool = False,
        has_header: bool = False,
    ):
        self.manifest = manifest
        self.schema = schema
        self.skip_bad_rows = skip_bad_rows
        self.has_header = has_header
        self.skipped_count = 0
        # records parsed but not yet handed to the consumer
        self.in_flight = 0
        self.peak_in_flight = 0

    def __iter__(self) -> Iterator[RevisionRecord]:
        for entry in self.manifest.batches:
            entry.row_count = 0
            yield from self._scan_one(entry)
            log.info("Batch %s: %d rows parsed", entry.batch_id, entry.row_count)
        if self.skipped_count:
            log.warning("Skipped %d malformed rows", self.skipped_count)

    def _scan_one(self, entry: BatchEntry) -> Iterator[RevisionRecord]:
        with entry.path.open(encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if lineno == 1 and self.has_header:
                    continue
                if not line.strip():
                    continue
                try:
                    record = parse_revision_row(line, self.schema, entry.batch_id)
                except DataError as exc:
                    err = RowError(entry.batch_id, lineno, exc)
                    if not self.skip_bad_rows:
                        raise err from exc
                    log.debug("Skipping row: %s", err)
                    self.skipped_count += 1
                    continue
                entry.row_count += 1
                self.in_flight += 1
                self.peak_in_flight = max(self.peak_in_flight, self.in_flight)
                yield record
                self.in_flight -= 1


def build_manifest(paths: Iterable[str | Path]) -> BatchManifest:
    entries = []
    seen: set[str] = set()
    for p in paths:
        path = Path(p)
        if not path.is_file():
            raise MissingPath(f"batch file not found: {path}")
        batch_id = path.stem
        if batch_id in seen:
            raise InvalidConfig(f"two batch files share the batch id {batch_id!r}")
        seen.add(batch_id)
        entries.append(BatchEntry(batch_id=batch_id, path=path))
    return BatchManifest(batches=entries)


def scan_batches(
    paths: Iterable[str | Path],
    schema: FeatureSchema,
    *,
    skip_bad_rows: bool = False,
    has_header: bool = False,
) -> tuple[BatchManifest, RecordStream]:
    """Manifest row counts are filled in as the stream is consumed."""
    manifest = build_manifest(paths)
    stream = RecordStream(manifest, schema, skip_bad_rows=skip_bad_rows, has_header=has_header)
    return manifest, stream


# ── sampled dataset files ─────────────────────────────

def _format_label(label: Optional[bool]) -> str:
    return MISSING_TOKEN if label is None else ("true" if label else "false")


def write_dataset(
    path: str | Path,
    records: Iterable[RevisionRecord],
    schema: FeatureSchema,
    header: Iterable[str] = (),
) -> int:
    """`revision_id batch_id label values...` with `#` provenance lines on top."""
    count = 0
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        fh.write("\t".join(["revision_id", "batch_id", "label", *schema.names]) + "\n")
        for r in records:
            fh.write("\t".join([r.revision_id, r.batch_id, _format_label(r.label), *map(format_value, r.values)]))
            fh.write("\n")
            count += 1
    return count


def read_dataset(path: str | Path, schema: FeatureSchema) -> list[RevisionRecord]:
    path = Path(path)
    if not path.is_file():
        raise MissingPath(f"sampled dataset not found: {path}")

    records: list[RevisionRecord] = []
    with path.open(encoding="utf-8") as fh:
        header_seen = False
        for lineno, line in enumerate(fh, start=1):
            if line.startswith("#") or not line.strip():
                continue
            fields = line.rstrip("\r\n").split("\t")
            if not header_seen:
                header_seen = True
                if fields[3:] != schema.names:
                    raise ColumnCountMismatch(f"{path}: columns {fields[3:]} do not match the schema")
                continue
            try:
                revision_id, batch_id, label_token = fields[:3]
                record = parse_revision_row("\t".join([revision_id, *fields[3:]]), schema, batch_id)
            except (DataError, ValueError) as exc:
                raise RowError(path.stem, lineno, DataError(str(exc))) from exc
            label = None if label_token == MISSING_TOKEN else label_token == "true"
            records.append(record.with_label(label))
    return records
