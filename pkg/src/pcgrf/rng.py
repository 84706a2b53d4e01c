"""Deterministic random-number streams.

All stochastic code in this package draws from counter-based Philox
generators keyed by a master seed plus an integer path, so replicates can
run in any order (or in parallel) and still reproduce bit-for-bit.
"""

from __future__ import annotations

import numpy as np


def substream(seed: int, *path: int) -> np.random.Generator:
    """Generator for the stream identified by (seed, path).

    The same (seed, path) always yields the same stream; distinct paths
    are statistically independent.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.Philox(ss))
