"""Keyed RNG streams.

Every consumer of randomness derives its own PCG64 stream from
(seed, stream tag, *key), so results never depend on the order in which
users or days are processed, nor on how work is split across workers.
"""

from __future__ import annotations

import numpy as np

STREAM_POPULATION = 1
STREAM_GROUPS = 2
STREAM_SIM = 3
STREAM_METRICS = 4


def bit_generator(seed: int, stream: int, *key: int) -> np.random.PCG64:
    return np.random.PCG64(np.random.SeedSequence([seed, stream, *key]))


def generator(seed: int, stream: int, *key: int) -> np.random.Generator:
    return np.random.Generator(bit_generator(seed, stream, *key))
