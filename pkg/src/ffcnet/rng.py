"""Deterministic named random streams.

All randomness in a run flows from one 64-bit seed.  Independent streams
are derived from the seed plus a path of names and indices (for example
``("psm", epoch, sample_index)``), so reordering the data or changing the
worker count never perturbs another sample's draws.
"""
from __future__ import annotations

import zlib

import numpy as np

_MASK64 = (1 << 64) - 1


def _entropy_word(key) -> int:
    if isinstance(key, str):
        return zlib.crc32(key.encode("utf-8"))
    if isinstance(key, (bool, np.bool_)):
        return int(key)
    if isinstance(key, (int, np.integer)):
        return int(key) & _MASK64
    raise TypeError(f"rng path element must be str or int, got {type(key).__name__}")


def derive_rng(seed: int, *path) -> np.random.Generator:
    """Generator for the stream named by ``path`` under the run seed."""
    entropy = [int(seed) & _MASK64] + [_entropy_word(k) for k in path]
    return np.random.default_rng(np.random.SeedSequence(entropy))
