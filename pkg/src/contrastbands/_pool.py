from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from functools import partial


def parallel_map(func, items, workers: int = 1, **kwargs):
    """Ordered map over ``items``; uses worker processes when ``workers > 1``."""
    items = list(items)
    fn = partial(func, **kwargs) if kwargs else func
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))
