from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, Iterator, TypeVar

T = TypeVar("T")


def default_threads() -> int:
    return os.cpu_count() or 1


def ordered_map(fn: Callable[[int], T], indices: Iterable[int], threads: int | None = None) -> Iterator[T]:
    """Map ``fn`` over ``indices``, yielding results in input order.

    Every per-frame operation in the package is a pure function of its frame
    index, so the thread count only changes wall time, never results.
    """
    threads = default_threads() if threads is None else int(threads)
    if threads <= 1:
        for i in indices:
            yield fn(i)
        return
    with ThreadPoolExecutor(max_workers=threads) as pool:
        yield from pool.map(fn, indices)
