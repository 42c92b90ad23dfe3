"""Deterministic chunked execution.

Heavy batched operations split their work into fixed-size chunks.  The
worker count only controls how many chunks run concurrently; chunk
boundaries never depend on it, every chunk writes a disjoint output slice,
and reductions combine per-chunk partials in index order.  Results are
therefore bit-identical for any thread setting.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable

_num_threads = 1


def set_num_threads(n: int) -> None:
    """Cap the worker pool used by chunked operations (>= 1)."""
    global _num_threads
    if n < 1:
        raise ValueError(f"thread count must be >= 1, got {n}")
    _num_threads = int(n)


def get_num_threads() -> int:
    return _num_threads


def chunk_ranges(start: int, stop: int, chunk: int) -> list[tuple[int, int]]:
    """Half-open ranges covering [start, stop) in steps of `chunk`."""
    if chunk < 1:
        raise ValueError("chunk must be >= 1")
    return [(s, min(s + chunk, stop)) for s in range(start, stop, chunk)]


def map_chunks(fn: Callable[[int, int], object], start: int, stop: int, chunk: int) -> list:
    """Apply ``fn(lo, hi)`` to each chunk range, returning results in index order."""
    ranges = chunk_ranges(start, stop, chunk)
    if _num_threads == 1 or len(ranges) <= 1:
        return [fn(lo, hi) for lo, hi in ranges]
    with ThreadPoolExecutor(max_workers=_num_threads) as pool:
        return list(pool.map(lambda r: fn(r[0], r[1]), ranges))
