"""
Synthetic revision corpus with a known, nonlinear vandalism rule.

Columns (schema order):

    x0, x1       numeric  U(-1, 1)
    x2           numeric  N(0, 1)
    x3           numeric  exponential counts, noise
    x4, x5       numeric  N(0, 1) noise, 5% missing
    sparseSignal numeric  40% missing, excluded by the 25% rule
    userName     categorical  user000..user199, 5% missing
    itemGroup    categorical  g00..g19, noise
    timestamp    dropped

A revision is vandalism when (x0^2 + x1^2 < 0.35 and x2 > 0), or when the
editor is one of the "bad" users (every tenth) and a 60% coin comes up.
Raw prevalence is about 0.19.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from detector.utils.logger import get_logger
from detector.utils.rng import make_rng

log = get_logger("services.synthetic")

SCHEMA = [
    ("x0", "numeric"),
    ("x1", "numeric"),
    ("x2", "numeric"),
    ("x3", "numeric"),
    ("x4", "numeric"),
    ("x5", "numeric"),
    ("sparseSignal", "numeric"),
    ("userName", "categorical"),
    ("itemGroup", "categorical"),
    ("timestamp", "dropped"),
]

N_USERS = 200
N_GROUPS = 20
DISK_RADIUS_SQ = 0.35
BAD_USER_RATE = 0.6


def _num(value: float, missing: bool) -> str:
    return "NA" if missing else f"{value:.6f}"


def generate_corpus(
    out_dir: str | Path,
    *,
    n_rows: int = 5000,
    n_batches: int = 3,
    seed: int = 0,
) -> dict[str, Path | list[Path]]:
    """Write schema.tsv, batch-XX.tsv files, truth.tsv and synthetic.conf into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = make_rng(seed, "synthetic")

    x01 = rng.uniform(-1.0, 1.0, size=(n_rows, 2))
    x2 = rng.standard_normal(n_rows)
    x3 = rng.exponential(2.0, size=n_rows).round()
    x45 = rng.standard_normal((n_rows, 2))
    x45_missing = rng.random((n_rows, 2)) < 0.05
    sparse = rng.standard_normal(n_rows)
    sparse_missing = rng.random(n_rows) < 0.40
    users = rng.integers(0, N_USERS, size=n_rows)
    user_missing = rng.random(n_rows) < 0.05
    groups = rng.integers(0, N_GROUPS, size=n_rows)
    coins = rng.random(n_rows)

    in_disk = (x01 ** 2).sum(axis=1) < DISK_RADIUS_SQ
    bad_user = (users % 10 == 0) & ~user_missing
    labels = (in_disk & (x2 > 0)) | (bad_user & (coins < BAD_USER_RATE))

    schema_path = out / "schema.tsv"
    schema_path.write_text(
        "".join(f"{name}\t{kind}\n" for name, kind in SCHEMA), encoding="utf-8", newline="\n"
    )

    bounds = np.linspace(0, n_rows, n_batches + 1).round().astype(int)
    batch_paths: list[Path] = []
    for b in range(n_batches):
        path = out / f"batch-{b + 1:02d}.tsv"
        with path.open("w", encoding="utf-8", newline="\n") as fh:
            for i in range(bounds[b], bounds[b + 1]):
                fields = [
                    f"r{i:07d}",
                    _num(x01[i, 0], False),
                    _num(x01[i, 1], False),
                    _num(x2[i], False),
                    _num(x3[i], False),
                    _num(x45[i, 0], x45_missing[i, 0]),
                    _num(x45[i, 1], x45_missing[i, 1]),
                    _num(sparse[i], sparse_missing[i]),
                    "NA" if user_missing[i] else f"user{users[i]:03d}",
                    f"g{groups[i]:02d}",
                    str(1_400_000_000 + 37 * i),
                ]
                fh.write("\t".join(fields) + "\n")
        batch_paths.append(path)

    truth_path = out / "truth.tsv"
    with truth_path.open("w", encoding="utf-8", newline="\n") as fh:
        for i in range(n_rows):
            fh.write(f"r{i:07d}\t{'true' if labels[i] else 'false'}\n")

    config_path = out / "synthetic.conf"
    config_path.write_text(
        "\n".join(
            [
                "# generated synthetic corpus",
                f"schema_path = {schema_path}",
                f"data_paths = {', '.join(str(p) for p in batch_paths)}",
                f"truth_path = {truth_path}",
                f"seed = {seed}",
                f"output_dir = {out / 'run'}",
                "sample.negative_ratio = 4",
                "sample.clamp_negatives = true",
                "grid.lr.learning_rate = 0.01, 0.1",
                "grid.ert.n_trees = 40",
                "grid.ert.min_samples_leaf = 1, 5",
                "grid.gbt.rounds = 80",
                "grid.gbt.max_depth = 4",
                "grid.gbt.learning_rate = 0.1, 0.3",
                "",
            ]
        ),
        encoding="utf-8",
        newline="\n",
    )

    log.info(
        "Synthetic corpus: %d rows in %d batches, %d positives (%.3f) -> %s",
        n_rows,
        n_batches,
        int(labels.sum()),
        float(labels.mean()),
        out,
    )
    return {"schema": schema_path, "batches": batch_paths, "truth": truth_path, "config": config_path}
