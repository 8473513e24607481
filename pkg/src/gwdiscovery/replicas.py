"""Seeded per-replica substreams and an order-preserving replica runner.

Replica ``i`` of a campaign seeded with ``seed`` always draws from the
streams derived from ``SeedSequence([seed, i])``, so results do not depend
on how replicas are distributed over workers.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable

import numpy as np


def replica_streams(seed: int, index: int, n: int = 2) -> list[np.random.Generator]:
    """Independent generators for one replica (tree stream first, marks second)."""
    root = np.random.SeedSequence([int(seed) & (2**64 - 1), int(index)])
    return [np.random.Generator(np.random.PCG64(s)) for s in root.spawn(n)]


def default_workers() -> int:
    return os.cpu_count() or 1


def _run_chunk(fn: Callable, start: int, stop: int, seed: int, args: tuple) -> np.ndarray:
    rows = [fn(seed, i, *args) for i in range(start, stop)]
    return np.asarray(rows)


def run_replicas(
    fn: Callable,
    replicas: int,
    seed: int,
    args: tuple = (),
    workers: int = 1,
) -> np.ndarray:
    """Evaluate ``fn(seed, i, *args)`` for i in range(replicas).

    ``fn`` returns a fixed-length tuple of numbers; the result is an array
    of shape (replicas, k) in replica order. With ``workers > 1`` chunks run
    in a process pool and ``fn`` must be a picklable top-level function.
    """
    if replicas <= 0:
        return np.empty((0, 0))
    workers = max(1, min(int(workers), replicas))
    if workers == 1:
        return _run_chunk(fn, 0, replicas, seed, args)
    n_chunks = workers * 4
    bounds = np.linspace(0, replicas, n_chunks + 1).astype(int)
    spans = [(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_run_chunk, fn, a, b, seed, args) for a, b in spans]
        parts = [f.result() for f in futures]
    return np.concatenate(parts, axis=0)
