"""Counter-based per-replica random streams.

Replica ``i`` of a run with root seed ``s`` always draws from the same Philox
stream, whatever the worker count or scheduling order.
"""
from __future__ import annotations

import os

import numpy as np

SEED_ENV = "TREERANGE_SEED"


def rng_stream(seed: int, index: int = 0) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(index),))
    return np.random.Generator(np.random.Philox(ss))


def substream(seed: int, index: int, tag: int) -> np.random.Generator:
    """Independent stream for a named sub-task of replica ``index``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(index), int(tag)))
    return np.random.Generator(np.random.Philox(ss))


def resolve_seed(seed: int | None, default: int = 0) -> int:
    env = os.environ.get(SEED_ENV)
    if env is not None and env.strip():
        return int(env, 0)
    return default if seed is None else int(seed)
