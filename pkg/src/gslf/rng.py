"""Reproducible random streams.

Every Monte Carlo index owns a Philox (counter-based) generator keyed by
``(master_seed, purpose, index)``, so results do not depend on the order in
which samples are drawn or on how many workers draw them.
"""
from __future__ import annotations

import numpy as np

# purpose tags, part of the stream key
GRF = 0
LEVY = 1
POINTWISE = 2
GRF_SECOND = 3
REPETITION = 4


def stream(master_seed: int, *key: int) -> np.random.Generator:
    seq = np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(seq))


def as_generator(rng) -> np.random.Generator:
    """Accept a Generator, an int seed or None."""
    if isinstance(rng, np.random.Generator):
        return rng
    return stream(0 if rng is None else int(rng))
