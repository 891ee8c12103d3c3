"""Counter-keyed random substreams.

Every random decision is drawn from a generator keyed by ``(seed, *key)``
through :class:`numpy.random.SeedSequence`, so results do not depend on the
order or thread in which work items run.
"""

from __future__ import annotations

import numpy as np


def substream(seed: int, *key: int) -> np.random.Generator:
    if seed < 0:
        raise ValueError("seed must be non-negative")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in key))))
