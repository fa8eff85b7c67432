"""Deterministic seed derivation.

Every random stream in the package is keyed by a root seed plus a tuple of
labels (pair of tickers, iteration, replication index...). Work items can
therefore run in any order, or in any worker, and still draw identical
numbers.
"""

from __future__ import annotations

import hashlib

import numpy as np

MASK64 = (1 << 64) - 1


def derive_seed(root: int, *parts: object) -> int:
    """Mix ``root`` and ``parts`` into an unsigned 64-bit seed."""
    text = "|".join([str(int(root) & MASK64), *map(str, parts)])
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def replication_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream for replication ``index`` of a run seeded with ``seed``."""
    return np.random.default_rng(np.random.SeedSequence(int(seed) & MASK64, spawn_key=(int(index),)))


def rng_for(root: int, *parts: object) -> np.random.Generator:
    return np.random.default_rng(derive_seed(root, *parts))
