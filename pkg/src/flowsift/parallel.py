"""Process-wide worker cap and an order-preserving parallel map.

Results are always returned in input order, so any computation routed
through ``map_ordered`` is independent of the worker count.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, TypeVar

T = TypeVar("T")
R = TypeVar("R")

_threads = 1


def set_threads(n: int | None) -> None:
    global _threads
    _threads = max(1, int(n)) if n else max(1, os.cpu_count() or 1)


def get_threads() -> int:
    return _threads


def map_ordered(fn: Callable[[T], R], items: Iterable[T], workers: int | None = None) -> list[R]:
    items = list(items)
    workers = min(workers or _threads, len(items)) if items else 1
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
