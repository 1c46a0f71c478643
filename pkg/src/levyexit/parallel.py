"""Deterministic parallel map: results come back in input order whatever the worker count."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, Sequence


def ordered_map(fn: Callable, items: Sequence, workers: int = 1, chunksize: int | None = None) -> list:
    """``[fn(item) for item in items]``, optionally on a process pool.

    Every item must carry its own seed material, so the output is independent of
    ``workers`` and of the scheduling order.
    """
    items = list(items)
    if workers is None or workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    if chunksize is None:
        chunksize = max(1, len(items) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items, chunksize=chunksize))


def batched(items: Iterable, size: int) -> list[list]:
    out, cur = [], []
    for it in items:
        cur.append(it)
        if len(cur) == size:
            out.append(cur)
            cur = []
    if cur:
        out.append(cur)
    return out
