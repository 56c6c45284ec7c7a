"""Seed handling.

Derived streams use tuple seeds so that per-sample or per-stage randomness is
independent of execution order.
"""

from __future__ import annotations

import numpy as np


def as_generator(rng) -> np.random.Generator:
    """Accept a Generator, an int seed, or a tuple seed."""
    if isinstance(rng, np.random.Generator):
        return rng
    if rng is None:
        raise ValueError("an rng or seed is required here")
    return np.random.default_rng(rng)


def derive(seed: int, *tags: int) -> np.random.Generator:
    """A generator for the stream identified by (seed, *tags)."""
    return np.random.default_rng((int(seed),) + tuple(int(t) for t in tags))
