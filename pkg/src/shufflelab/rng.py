"""Seeded random streams.

Every random draw in the package goes through a Philox4x64 counter-based
generator. Streams are keyed by a 64-bit seed; sub-streams for parallel work
are derived from ``(master seed, key...)`` with :class:`numpy.random.SeedSequence`
spawn keys, so results never depend on how work is scheduled.
"""

from __future__ import annotations

import numpy as np

SEED_MASK = (1 << 64) - 1


def make_generator(seed: int, *keys: int) -> np.random.Generator:
    """Return a Philox generator for ``seed`` and an optional key path."""
    seq = np.random.SeedSequence(int(seed) & SEED_MASK, spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.Philox(seq))


def derive_seed(master: int, *keys: int) -> int:
    """Derive a 64-bit seed for the sub-stream ``keys`` of ``master``."""
    seq = np.random.SeedSequence(int(master) & SEED_MASK, spawn_key=tuple(int(k) for k in keys))
    return int(seq.generate_state(1, dtype=np.uint64)[0])


def fisher_yates(n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform random permutation of ``range(n)`` by the Fisher-Yates shuffle."""
    perm = np.arange(n)
    if n < 2:
        return perm
    # swap partner for position i is uniform on [0, i]
    partners = rng.integers(0, np.arange(n, 1, -1))
    for i, j in zip(range(n - 1, 0, -1), partners.tolist()):
        perm[i], perm[j] = perm[j], perm[i]
    return perm
