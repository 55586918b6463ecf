"""Order-preserving thread pool capped by ``BTM_DISAGG_THREADS``."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor


def thread_count(threads=None) -> int:
    if threads is None:
        threads = int(os.environ.get("BTM_DISAGG_THREADS", "0") or 0)
    if threads <= 0:
        threads = os.cpu_count() or 1
    return threads


def map_ordered(fn, items, threads=None) -> list:
    """``[fn(i) for i in items]``, evaluated on up to ``threads`` workers.

    Each call must derive its randomness from its own item, so the result
    does not depend on the worker count.
    """
    items = list(items)
    n = thread_count(threads)
    if n == 1 or len(items) < 2:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))
