from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from detector.config import settings
from detector.models.records import DesignMatrix, RevisionRecord
from detector.models.schemas import FeatureDecl, FeatureKind, FeatureSchema


@pytest.fixture
def make_schema():
    """make_schema(("a", "numeric"), ("u", "categorical"), ...)"""

    def _make(*decls: tuple[str, str]) -> FeatureSchema:
        return FeatureSchema(
            decls=tuple(FeatureDecl(name=n, kind=FeatureKind(k), source_index=i) for i, (n, k) in enumerate(decls))
        )

    return _make


@pytest.fixture
def record():
    def _make(rid: str, values, label=None, batch: str = "b1") -> RevisionRecord:
        return RevisionRecord(revision_id=rid, batch_id=batch, values=tuple(values), label=label)

    return _make


@pytest.fixture
def matrix():
    def _make(X, y) -> DesignMatrix:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        return DesignMatrix(
            values=X,
            labels=np.asarray(y, dtype=np.int8),
            row_ids=[f"r{i:04d}" for i in range(X.shape[0])],
            column_names=[f"c{j}" for j in range(X.shape[1])],
        )

    return _make


@pytest.fixture
def write_lines(tmp_path):
    def _write(name: str, lines) -> Path:
        path = tmp_path / name
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("".join(f"{line}\n" for line in lines), encoding="utf-8")
        return path

    return _write


@pytest.fixture
def pinned_timestamp(monkeypatch):
    monkeypatch.setattr(settings, "SOURCE_DATE_EPOCH", "1700000000")


@pytest.fixture
def toy_corpus(tmp_path, write_lines):
    """40 positives and 400 negatives over two batches, plus a config file.

    Columns: editSize (numeric, ~10% missing), userName (categorical),
    timestamp (dropped). Positives have larger edits and favour user u1.
    """
    rng = np.random.default_rng(11)
    labels = rng.permutation(np.r_[np.ones(40, dtype=bool), np.zeros(400, dtype=bool)])
    rows, truth = [], []
    for i, label in enumerate(labels):
        size = "NA" if rng.random() < 0.1 else f"{rng.normal(2.0 if label else 0.0, 1.0):.4f}"
        user = "u1" if label and rng.random() < 0.7 else f"u{rng.integers(1, 6)}"
        rows.append(f"t{i:04d}\t{size}\t{user}\t{1_500_000_000 + i}")
        truth.append(f"t{i:04d}\t{'true' if label else 'false'}")

    schema = write_lines("toy/schema.tsv", ["editSize\tnum", "userName\tcat", "timestamp\tdrop"])
    b1 = write_lines("toy/b1.tsv", rows[:220])
    b2 = write_lines("toy/b2.tsv", rows[220:])
    truth_path = write_lines("toy/truth.tsv", truth)
    config = write_lines(
        "toy/toy.conf",
        [
            f"schema_path = {schema}",
            f"data_paths = {b1}, {b2}",
            f"truth_path = {truth_path}",
            "seed = 5",
            f"output_dir = {tmp_path / 'toy-out'}",
            "sample.k_folds = 3",
            "learner.kind = gbt",
            "learner.rounds = 10",
            "learner.max_depth = 2",
        ],
    )
    return {"schema": schema, "batches": [b1, b2], "truth": truth_path, "config": config, "out": tmp_path / "toy-out"}
