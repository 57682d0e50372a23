"""Chunked Monte Carlo with reproducible streams.

Trials are cut into fixed-size chunks; chunk ``i`` always draws from child
``i`` of ``SeedSequence(seed)``, and results are merged in chunk order.
Estimates therefore depend on ``(seed, chunk_size)`` only, not on how many
worker processes ran the chunks.
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from functools import reduce
from typing import Callable

import numpy as np


def chunk_sizes(trials: int, chunk: int) -> list[int]:
    if trials <= 0 or chunk <= 0:
        raise ValueError("trials and chunk must be positive")
    full, rest = divmod(trials, chunk)
    return [chunk] * full + ([rest] if rest else [])


def chunk_rngs(seed: int, n_chunks: int) -> list[np.random.Generator]:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n_chunks)]


def _call(args):
    task, payload, size, seq = args
    return task(payload, size, np.random.default_rng(seq))


def run_chunks(task: Callable, payload, trials: int, seed: int, chunk: int = 20_000,
               workers: int = 1, merge: Callable | None = None):
    """Run ``task(payload, size, rng)`` over chunks and merge in chunk order.

    ``task`` must be a module-level function when ``workers > 1``.  With
    ``merge=None`` the list of per-chunk results is returned.
    """
    sizes = chunk_sizes(trials, chunk)
    seqs = np.random.SeedSequence(seed).spawn(len(sizes))
    jobs = [(task, payload, s, q) for s, q in zip(sizes, seqs)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_call, jobs))
    else:
        results = [_call(j) for j in jobs]
    return results if merge is None else reduce(merge, results)
