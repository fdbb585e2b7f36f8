"""Deterministic seed derivation for independent random streams.

Every stochastic component takes an explicit ``numpy.random.Generator``.
Sub-streams (per episode, per agent, per trial) are derived from a master
seed with splitmix64 so that runs are reproducible and streams do not
overlap for the index ranges we use.
"""
from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    """One splitmix64 output step for the 64-bit state ``x``."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def derive_seed(seed: int, *keys: int) -> int:
    """Mix ``seed`` with integer keys; each key folds through splitmix64."""
    h = seed & _MASK64
    for k in keys:
        h = splitmix64((h + (k & _MASK64)) & _MASK64)
    return h


def derive_rng(seed: int, *keys: int) -> np.random.Generator:
    """Generator seeded from ``derive_seed(seed, *keys)``."""
    return np.random.default_rng(derive_seed(seed, *keys))
