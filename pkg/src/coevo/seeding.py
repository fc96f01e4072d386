"""Task-scoped RNG derivation.

Every stochastic task in the engine draws from a generator keyed by
(run seed, stream tag, iteration, problem, attempt) so results are independent
of worker count and scheduling order. Streams separate the distinct uses of
randomness within one iteration.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1

STREAM_SOLVE = 1
STREAM_UTILITY = 2
STREAM_REFINE = 3
STREAM_QUALITY = 4
STREAM_SEED_FILTER = 5
STREAM_PAIRS = 6


def pid_int(problem_id: str) -> int:
    """Map a hex problem id to a non-negative int usable as seed material."""
    try:
        return int(problem_id, 16) & _MASK
    except ValueError:
        return hash(problem_id) & _MASK


def rng_for(*parts: int) -> np.random.Generator:
    return np.random.default_rng([int(p) & _MASK for p in parts])
