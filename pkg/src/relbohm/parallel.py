"""Deterministic chunked parallel map and per-member random streams."""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor

import numpy as np

CHUNK = 256


def member_rng(seed: int, member: int) -> np.random.Generator:
    """Counter-based stream keyed by ``(seed, member)``.

    Philox keyed through ``SeedSequence`` gives independent streams whose
    draws do not depend on which worker handles the member.
    """
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(member)])))


def chunks(count: int, size: int = CHUNK):
    return [(lo, min(lo + size, count)) for lo in range(0, count, size)]


def chunked_map(fn, jobs, threads: int = 1):
    """``[fn(*job) for job in jobs]``, optionally on a process pool.

    Job boundaries are fixed by the caller, never by the worker count, so the
    output is bit-identical for every ``threads`` value.
    """
    jobs = list(jobs)
    if threads <= 1 or len(jobs) <= 1:
        return [fn(*job) for job in jobs]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(fn, *job) for job in jobs]
        return [f.result() for f in futures]
