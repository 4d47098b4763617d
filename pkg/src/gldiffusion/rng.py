"""Counter-based random streams.

Every stochastic task draws from its own Philox stream keyed by the run seed
and a tuple of integer task ids, so results never depend on how tasks are
scheduled across threads.
"""
from __future__ import annotations

import numpy as np


def stream(seed: int, *ids: int) -> np.random.Generator:
    """Independent generator for ``(seed, *ids)``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(i) for i in ids))
    return np.random.Generator(np.random.Philox(ss))
