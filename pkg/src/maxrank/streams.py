"""Seeded random substreams.

Every experiment cell and trial gets its own Philox (counter-based) stream
keyed by the master seed plus integer coordinates, so results do not depend
on the order or process in which cells run.
"""

from __future__ import annotations

import struct

import numpy as np


def float_key(x: float) -> int:
    """Exact 64-bit integer key for a float coordinate such as rho."""
    return struct.unpack("<Q", struct.pack("<d", float(x)))[0]


def seed_sequence(master_seed: int, *coords: int) -> np.random.SeedSequence:
    if master_seed < 0:
        raise ValueError(f"seed must be non-negative, got {master_seed}")
    return np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(c) for c in coords))


def generator(seq: np.random.SeedSequence) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seq))


def substream(master_seed: int, *coords: int) -> np.random.Generator:
    return generator(seed_sequence(master_seed, *coords))


def child_seed(rng: np.random.Generator) -> int:
    return int(rng.integers(0, 2**63 - 1))
