"""Sample-axis parallelism with worker-count-independent results.

Work is split into fixed-size chunks (never sized by worker count) and each
chunk writes a disjoint slice of a preallocated output, so any value of
CLENS_THREADS produces bitwise-identical arrays.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

CHUNK = 4096


def worker_count() -> int:
    env = os.environ.get("CLENS_THREADS", "").strip()
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            return 1
    return min(8, os.cpu_count() or 1)


def sample_chunks(n: int) -> list[tuple[int, int]]:
    return [(lo, min(lo + CHUNK, n)) for lo in range(0, n, CHUNK)]


def map_chunks(fn, n: int) -> None:
    """Run fn(lo, hi) over fixed chunks of range(n), possibly in parallel."""
    spans = sample_chunks(n)
    workers = worker_count()
    if workers <= 1 or len(spans) <= 1:
        for lo, hi in spans:
            fn(lo, hi)
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        for _ in pool.map(lambda span: fn(*span), spans):
            pass
