"""Seeded random streams.

All randomness flows through Philox, a counter-based generator whose output
numpy keeps stable across platforms and releases. Sub-streams are derived by
hashing the integer seed together with string or integer tags, so a stream is
reproducible from (seed, tags) alone.
"""
from __future__ import annotations

import zlib

import numpy as np

GENERATOR = "numpy.random.Philox"


def _tag_int(tag) -> int:
    if isinstance(tag, (int, np.integer)):
        return int(tag) & 0xFFFFFFFF
    return zlib.crc32(str(tag).encode("utf-8"))


def make_rng(seed: int, *tags) -> np.random.Generator:
    if seed < 0 or seed >= 2**64:
        raise ValueError("seed must be a 64-bit unsigned integer")
    entropy = [int(seed) & 0xFFFFFFFF, int(seed) >> 32, *(_tag_int(t) for t in tags)]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def derive_seed(seed: int, *tags) -> int:
    """A fresh 63-bit seed for handing to another seeded function."""
    return int(make_rng(seed, "derive", *tags).integers(0, 2**63))
