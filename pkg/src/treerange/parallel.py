"""Fan-out of replicas over worker processes.

Results are returned in replica order, so any reduction over them is
independent of the number of workers.
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Sequence

from .rng import rng_stream


def _run_block(fn: Callable, seed: int, indices: Sequence[int], args: tuple):
    return [fn(rng_stream(seed, i), *args) for i in indices]


def replicate(fn: Callable, reps: int, seed: int, args: tuple = (), workers: int = 1, start: int = 0) -> list:
    """Evaluate ``fn(rng_i, *args)`` for replicas ``start .. start+reps-1``."""
    idx = list(range(start, start + reps))
    workers = max(1, min(int(workers), reps))
    if workers == 1:
        return _run_block(fn, seed, idx, args)
    blocks = [idx[w::workers] for w in range(workers)]
    out = [None] * reps
    with ProcessPoolExecutor(max_workers=workers) as ex:
        futures = [ex.submit(_run_block, fn, seed, b, args) for b in blocks]
        for b, fut in zip(blocks, futures):
            for i, res in zip(b, fut.result()):
                out[i - start] = res
    return out
