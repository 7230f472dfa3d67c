"""Counter-based random streams.

Every Monte Carlo routine splits its work into fixed-size blocks of samples.
Block ``b`` of a routine tagged ``tag`` draws from a Philox generator keyed by
``(seed, tag)`` with its counter starting at ``b``, so the numbers a sample
sees do not depend on how blocks are distributed over worker threads.
"""

from __future__ import annotations

import hashlib
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

import numpy as np

BLOCK = 256
T = TypeVar("T")


def tag_id(tag: str) -> int:
    return int.from_bytes(hashlib.sha256(tag.encode()).digest()[:8], "little")


def stream(seed: int, tag: str, block: int = 0) -> np.random.Generator:
    if seed < 0 or seed >= 2**64:
        raise ValueError("seed must be an unsigned 64-bit integer")
    key = np.array([seed, tag_id(tag)], dtype=np.uint64)
    bitgen = np.random.Philox(key=key, counter=np.array([0, 0, 0, block], dtype=np.uint64))
    return np.random.Generator(bitgen)


def blocks(n: int, size: int = BLOCK) -> list[tuple[int, int, int]]:
    """(block index, start, stop) triples covering range(n)."""
    return [(b, start, min(start + size, n)) for b, start in enumerate(range(0, n, size))]


def map_blocks(fn: Callable[[int, int, int], T], n: int, threads: int = 1, size: int = BLOCK) -> list[T]:
    """Apply ``fn(block, start, stop)`` to every block, results in block order."""
    work: Sequence[tuple[int, int, int]] = blocks(n, size)
    if threads <= 1 or len(work) <= 1:
        return [fn(*w) for w in work]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda w: fn(*w), work))
