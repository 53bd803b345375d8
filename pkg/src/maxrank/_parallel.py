from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor


def resolve_threads(threads: int | None) -> int:
    if threads is None or threads == 1:
        return 1
    if threads <= 0:
        return os.cpu_count() or 1
    return threads


def ordered_map(fn, items, threads: int | None = 1) -> list:
    """``[fn(x) for x in items]``, optionally over a process pool; order is kept."""
    items = list(items)
    workers = min(resolve_threads(threads), max(len(items), 1))
    if workers <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
