"""Thread-pool helper with deterministic, order-preserving reduction.

Work items are mapped to results in input order, so numerical output is
independent of the worker count; the pool only changes wall-clock time.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

_MAX_THREADS = max(1, os.cpu_count() or 1)


def set_threads(n: int) -> None:
    """Cap worker parallelism; n = 1 forces serial execution."""
    global _MAX_THREADS
    if n < 1:
        raise ValueError("thread count must be >= 1")
    _MAX_THREADS = n


def get_threads() -> int:
    return _MAX_THREADS


def thread_map(fn, items):
    """Apply fn to each item, in order, using up to get_threads() workers."""
    items = list(items)
    if _MAX_THREADS <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=min(_MAX_THREADS, len(items))) as ex:
        return list(ex.map(fn, items))
