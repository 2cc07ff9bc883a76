"""
Negative subsampling, train/validation split and stratified CV folds.

All positives are kept. Negatives are drawn without replacement, per batch,
with quotas proportional to each batch's negative count. Every random choice
is a PCG64 stream keyed by (seed, purpose), so results depend only on the
seed and the row ids.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from detector.models.records import (
    BatchManifest,
    RevisionRecord,
    Role,
    SampledDataset,
    SamplePlan,
    SplitAssignment,
)
from detector.models.schemas import SampleConfig
from detector.utils.errors import (
    DataError,
    DegenerateSplit,
    InsufficientNegatives,
    MissingPath,
    TooFewMinoritySamples,
)
from detector.utils.logger import get_logger
from detector.utils.rng import make_rng

log = get_logger("services.sampling")


def round_half_up(x: float) -> int:
    return math.floor(x + 0.5)


# ── quotas ────────────────────────────────────────────

def allocate_negative_quota(
    batch_negative_counts: Mapping[str, int],
    target_total: int,
    *,
    cap: bool = True,
) -> dict[str, int]:
    """Largest-remainder apportionment of ``target_total`` over the batches.

    Remainder ties go to the lexicographically smallest batch id. With
    ``cap`` (the sampler's mode) the target may not exceed availability, which
    also guarantees no quota exceeds its batch's count.
    """
    if target_total < 0 or any(c < 0 for c in batch_negative_counts.values()):
        raise ValueError("counts and target must be nonnegative")

    total = sum(batch_negative_counts.values())
    if cap and target_total > total:
        raise InsufficientNegatives(f"need {target_total} negatives, only {total} available")
    if target_total == 0:
        return {b: 0 for b in batch_negative_counts}
    if total == 0:
        raise InsufficientNegatives("no negatives available in any batch")

    # exact integer arithmetic: quota_b = floor(target * c_b / total) + bonus
    quotas = {b: target_total * c // total for b, c in batch_negative_counts.items()}
    remainders = {b: target_total * c % total for b, c in batch_negative_counts.items()}
    leftover = target_total - sum(quotas.values())
    for b in sorted(batch_negative_counts, key=lambda b: (-remainders[b], b))[:leftover]:
        quotas[b] += 1
    return quotas


def plan_sample(manifest: BatchManifest, cfg: SampleConfig) -> SamplePlan:
    """Quota plan from a manifest whose label counts were filled by a join pass."""
    positives = sum(b.positive_count for b in manifest.batches)
    available = {b.batch_id: b.negative_count for b in manifest.batches}
    target = round_half_up(cfg.negative_ratio * positives)

    if target > sum(available.values()):
        if not cfg.clamp_negatives:
            raise InsufficientNegatives(
                f"{cfg.negative_ratio} x {positives} positives needs {target} negatives, "
                f"only {sum(available.values())} available"
            )
        log.warning(
            "Only %d negatives available for a target of %d; taking all of them",
            sum(available.values()),
            target,
        )
        target = sum(available.values())

    quotas = allocate_negative_quota(available, target)
    log.info("Sample plan: %d positives, %d negatives over %d batches", positives, target, len(quotas))
    return SamplePlan(per_batch_negative_quota=quotas, total_positives=positives, total_negatives_target=target)


# ── reservoir ─────────────────────────────────────────

class Reservoir:
    """Uniform sample of fixed size without replacement from a stream (algorithm R)."""

    def __init__(self, capacity: int, rng: np.random.Generator):
        self.capacity = capacity
        self.items: list = []
        self.seen = 0
        self._rng = rng

    def offer(self, item) -> None:
        self.seen += 1
        if len(self.items) < self.capacity:
            self.items.append(item)
            return
        if self.capacity == 0:
            return
        j = int(self._rng.integers(0, self.seen))
        if j < self.capacity:
            self.items[j] = item


def subsample(
    records: Iterable[RevisionRecord],
    manifest: BatchManifest,
    cfg: SampleConfig,
) -> SampledDataset:
    """Keep every positive and each batch's quota of uniformly drawn negatives.

    Output is in manifest order, stream order within a batch. Unlabeled
    records are not usable and are skipped.
    """
    plan = plan_sample(manifest, cfg)

    positives: dict[str, list[tuple[int, RevisionRecord]]] = {b: [] for b in manifest.batch_ids}
    reservoirs = {
        b: Reservoir(plan.per_batch_negative_quota[b], make_rng(cfg.seed, f"batch:{b}"))
        for b in manifest.batch_ids
    }
    unlabeled = 0

    for position, record in enumerate(records):
        if record.batch_id not in reservoirs:
            raise DataError(f"record {record.revision_id!r} belongs to unknown batch {record.batch_id!r}")
        if record.label is None:
            unlabeled += 1
        elif record.label:
            positives[record.batch_id].append((position, record))
        else:
            reservoirs[record.batch_id].offer((position, record))

    out: list[RevisionRecord] = []
    sampled: dict[str, int] = {}
    for batch_id in manifest.batch_ids:
        reservoir = reservoirs[batch_id]
        if len(reservoir.items) < reservoir.capacity:
            raise InsufficientNegatives(
                f"batch {batch_id!r}: quota {reservoir.capacity} but the stream held "
                f"{reservoir.seen} negatives"
            )
        merged = sorted(positives[batch_id] + reservoir.items, key=lambda pair: pair[0])
        out.extend(record for _, record in merged)
        sampled[batch_id] = len(reservoir.items)
        log.info(
            "Batch %s: kept %d positives, sampled %d of %d negatives",
            batch_id,
            len(positives[batch_id]),
            len(reservoir.items),
            reservoir.seen,
        )

    if unlabeled:
        log.warning("%d records without a truth label were not sampled", unlabeled)
    return SampledDataset(records=out, plan=plan, negatives_sampled=sampled, unlabeled_skipped=unlabeled)


# ── split and folds ───────────────────────────────────

def train_val_split(row_ids: Sequence[str], cfg: SampleConfig) -> SplitAssignment:
    """Plain (unstratified) seeded split; |train| = round(train_fraction * n)."""
    if len(row_ids) == 0:
        raise DegenerateSplit("cannot split an empty dataset")
    ordered = sorted(set(row_ids))
    if len(ordered) != len(row_ids):
        raise DataError("row ids must be unique")

    n = len(ordered)
    n_train = round_half_up(cfg.train_fraction * n)
    if n_train == 0 or n_train == n:
        raise DegenerateSplit(f"a {cfg.train_fraction:.2f} split of {n} rows leaves one side empty")

    perm = make_rng(cfg.seed, "split").permutation(n)
    train = {ordered[i] for i in perm[:n_train]}
    roles = {rid: (Role.train if rid in train else Role.validation) for rid in row_ids}
    return SplitAssignment(roles=roles)


def kfold_assign(row_ids: Sequence[str], labels: Sequence[bool], k: int, seed: int) -> dict[str, int]:
    """Stratified folds: within each class fold sizes differ by at most one."""
    by_class: dict[bool, list[str]] = {False: [], True: []}
    for rid, label in zip(row_ids, labels, strict=True):
        by_class[bool(label)].append(rid)

    minority = min(len(v) for v in by_class.values())
    if minority < k:
        raise TooFewMinoritySamples(f"{k} folds need at least {k} rows per class, minority class has {minority}")

    folds: dict[str, int] = {}
    for cls, ids in by_class.items():
        ids = sorted(ids)
        perm = make_rng(seed, f"fold:{int(cls)}").permutation(len(ids))
        for position, i in enumerate(perm):
            folds[ids[i]] = position % k
    return {rid: folds[rid] for rid in row_ids}


def assign_splits(records: Sequence[RevisionRecord], cfg: SampleConfig) -> SplitAssignment:
    split = train_val_split([r.revision_id for r in records], cfg)
    train = [r for r in records if split.roles[r.revision_id] is Role.train]
    split.folds = kfold_assign([r.revision_id for r in train], [bool(r.label) for r in train], cfg.k_folds, cfg.seed)
    log.info(
        "Split: %d train (%d folds), %d validation",
        len(train),
        cfg.k_folds,
        len(records) - len(train),
    )
    return split


# ── sidecar ───────────────────────────────────────────

def write_split(path: str | Path, split: SplitAssignment, header: Iterable[str] = ()) -> None:
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        fh.write("row_id\trole\tfold\n")
        for rid, role in split.roles.items():
            fold = split.folds.get(rid)
            fh.write(f"{rid}\t{role.value}\t{'-' if fold is None else fold}\n")


def read_split(path: str | Path) -> SplitAssignment:
    path = Path(path)
    if not path.is_file():
        raise MissingPath(f"split sidecar not found: {path}")
    roles: dict[str, Role] = {}
    folds: dict[str, int] = {}
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if line.startswith("#") or line.startswith("row_id\t") or not line.strip():
                continue
            parts = line.rstrip("\r\n").split("\t")
            if len(parts) != 3:
                raise DataError(f"{path}:{lineno}: expected `row_id<TAB>role<TAB>fold`")
            rid, role, fold = parts
            try:
                roles[rid] = Role(role)
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: unknown role {role!r}") from exc
            if fold != "-":
                folds[rid] = int(fold)
    return SplitAssignment(roles=roles, folds=folds)
