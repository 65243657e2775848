"""Seed handling shared by every stochastic routine."""

from __future__ import annotations

from typing import Union

import numpy as np

SeedLike = Union[int, np.random.SeedSequence, None]


def as_seed_sequence(seed: SeedLike) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    if seed is None:
        return np.random.SeedSequence()
    return np.random.SeedSequence(int(seed))


def make_rng(seed: SeedLike) -> np.random.Generator:
    return np.random.default_rng(as_seed_sequence(seed))


def child_seed(seed: SeedLike, *key: int) -> np.random.SeedSequence:
    """Deterministic sub-stream addressed by an integer path.

    Unlike ``spawn`` this does not depend on how many children were
    requested before, so stream ``(r,)`` is the same whether replicates run
    in order, in parallel or in isolation.
    """
    base = as_seed_sequence(seed)
    return np.random.SeedSequence(
        entropy=base.entropy, spawn_key=tuple(base.spawn_key) + tuple(int(k) for k in key)
    )
