"""Deterministic random number generation.

Every stream is a Philox counter-based generator keyed by a 64-bit master
seed plus an integer path (replication index, grid index, ...). Two streams
with different paths are statistically independent, and a stream never
depends on how work was split across threads.
"""

from __future__ import annotations

import numpy as np

_SEED_MAX = 2**64 - 1


def check_seed(seed) -> int:
    if isinstance(seed, (bool, np.bool_)) or not isinstance(seed, (int, np.integer)):
        raise TypeError(f"seed must be an integer, got {type(seed).__name__}")
    seed = int(seed)
    if not 0 <= seed <= _SEED_MAX:
        raise ValueError(f"seed must lie in [0, 2**64 - 1], got {seed}")
    return seed


def generator(seed: int, *path: int) -> np.random.Generator:
    """Return the generator for ``seed`` at the given spawn path."""
    ss = np.random.SeedSequence(entropy=check_seed(seed), spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed: int, *path: int) -> int:
    """A child 64-bit seed, for APIs that take a seed rather than a generator."""
    ss = np.random.SeedSequence(entropy=check_seed(seed), spawn_key=tuple(int(p) for p in path))
    return int(ss.generate_state(1, dtype=np.uint64)[0])
