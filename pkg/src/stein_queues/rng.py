"""Counter-based random streams for reproducible parallel Monte Carlo.

Every replication draws from its own Philox stream keyed by
``(master seed, replication index)``, so results do not depend on how
replications are distributed over workers.
"""
from __future__ import annotations

import hashlib
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, TypeVar

import numpy as np

R = TypeVar("R")

_MASK64 = (1 << 64) - 1
THREADS_ENV = "STEIN_QUEUES_THREADS"


def stream(seed: int, index: int = 0) -> np.random.Generator:
    """Return the generator for replication ``index`` of master ``seed``."""
    if index < 0:
        raise ValueError("replication index must be non-negative")
    key = (int(index) << 64) | (int(seed) & _MASK64)
    return np.random.Generator(np.random.Philox(key=key))


def derive_seed(seed: int, *labels) -> int:
    """Deterministically derive a 64-bit sub-seed from ``seed`` and labels."""
    text = repr((int(seed) & _MASK64,) + tuple(labels)).encode()
    return int.from_bytes(hashlib.sha256(text).digest()[:8], "little")


def thread_count() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def replicate(fn: Callable[[np.random.Generator], R], seed: int, count: int,
              threads: int | None = None) -> List[R]:
    """Run ``fn`` on ``count`` independent streams and return results in index order.

    The thread count only changes wall time; output is identical for any value.
    """
    threads = thread_count() if threads is None else threads
    if threads <= 1 or count < 2:
        return [fn(stream(seed, i)) for i in range(count)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda i: fn(stream(seed, i)), range(count)))


def replicate_indexed(fn: Callable[[int, np.random.Generator], R], seed: int, count: int,
                      threads: int | None = None) -> List[R]:
    """Like :func:`replicate` but ``fn`` also receives the replication index."""
    threads = thread_count() if threads is None else threads
    if threads <= 1 or count < 2:
        return [fn(i, stream(seed, i)) for i in range(count)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda i: fn(i, stream(seed, i)), range(count)))
