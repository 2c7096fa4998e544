"""Seeded random streams.

Every stream is a Philox4x64-10 counter-based generator (numpy's ``Philox``)
keyed through ``SeedSequence(seed, spawn_key=key)``.  Independent substreams
(one per instance, one per cell, ...) are obtained by extending ``key``, so
results never depend on the order in which streams are consumed.
"""

from __future__ import annotations

import numpy as np


def stream(seed: int, *key: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed) & (2**128 - 1),
                                spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))
