"""Counter-based random streams derived from one master seed.

Each consumer (mobility, fading, policy sampling, ...) owns a stream id, and
every draw site adds its own counters, so adding draws to one consumer never
shifts the numbers another consumer sees.
"""

from __future__ import annotations

import numpy as np

INIT = 1
SCENARIO = 2
MOBILITY = 3
FADING = 4
POLICY = 5
PERMUTATION = 6
MINIBATCH = 7
EVAL = 8
BASELINE = 9


def stream(seed: int, kind: int, *counters: int) -> np.random.Generator:
    """Return an independent generator for ``(seed, kind, *counters)``."""
    key = (int(kind),) + tuple(int(c) for c in counters)
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=key))
