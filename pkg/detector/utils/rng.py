"""
Seed derivation. Every random stream is a PCG64 generator whose seed is a
64-bit value derived from the run seed and a label.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(seed: int, label: str) -> int:
    digest = hashlib.blake2b(f"{seed}:{label}".encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def make_rng(seed: int, label: str | None = None) -> np.random.Generator:
    value = seed if label is None else derive_seed(seed, label)
    return np.random.Generator(np.random.PCG64(value))
