"""Deterministic seeding and an order-preserving thread map."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

MASK64 = (1 << 64) - 1
THREADS_ENV = "NCE_LAB_THREADS"


def splitmix64(seed: int, index: int = 0) -> int:
    """Seed for stream ``index`` derived from a base ``seed``.

    The base seed is xor-ed with the index and passed through the splitmix64
    finalizer, so nearby indices give unrelated streams.
    """
    z = ((seed ^ index) + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def worker_count(requested: int | None = None) -> int:
    """Number of threads: ``requested``, capped by ``NCE_LAB_THREADS`` if set."""
    n = 1 if requested is None else int(requested)
    cap = os.environ.get(THREADS_ENV)
    if cap:
        try:
            n = min(n, max(1, int(cap))) if requested is not None else max(1, int(cap))
        except ValueError:
            pass
    return max(1, n)


def parallel_map(fn, items, workers: int | None = None) -> list:
    """``[fn(x) for x in items]``, optionally on a thread pool; order is preserved."""
    items = list(items)
    n = worker_count(workers)
    if n == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))
