"""Bounded worker pool with order-preserving map.

Results never depend on the worker count: work is split into items whose
random streams are fixed by item index, and results are combined in index
order by the caller.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Optional, TypeVar

T = TypeVar("T")
R = TypeVar("R")

_default_threads: Optional[int] = None


def set_default_threads(threads: Optional[int]) -> None:
    """Set the process-wide worker cap used when no context is passed."""
    global _default_threads
    if threads is not None and threads < 1:
        raise ValueError("threads must be >= 1")
    _default_threads = threads


def default_threads() -> int:
    if _default_threads is not None:
        return _default_threads
    env = os.environ.get("GEODETECT_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


class Parallel:
    """Parallelism context handed to module functions.

    Parameters
    ----------
    threads : int, optional
        Maximum number of worker threads. ``None`` uses the process default.
    """

    def __init__(self, threads: Optional[int] = None):
        self.threads = default_threads() if threads is None else int(threads)
        if self.threads < 1:
            raise ValueError("threads must be >= 1")

    def map(self, fn: Callable[[T], R], items: Iterable[T]) -> List[R]:
        items = list(items)
        if self.threads == 1 or len(items) <= 1:
            return [fn(x) for x in items]
        with ThreadPoolExecutor(max_workers=min(self.threads, len(items))) as pool:
            return list(pool.map(fn, items))

    def __repr__(self) -> str:
        return f"Parallel(threads={self.threads})"


def resolve(parallel: Optional[Parallel]) -> Parallel:
    return parallel if parallel is not None else Parallel()
