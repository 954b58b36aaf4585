# Ordered fan-out over a thread pool. Results come back in input order,
# so callers that derive seeds from content stay deterministic under any
# worker count.

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, TypeVar

from blockfactor.core.config import settings

T = TypeVar("T")
R = TypeVar("R")


def parallel_map(fn: Callable[[T], R], items: Iterable[T], threads: int | None = None) -> list[R]:
    items = list(items)
    workers = min(settings.resolve_threads(threads), max(len(items), 1))
    if workers <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
