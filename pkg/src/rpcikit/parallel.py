"""Worker-pool sizing shared by the metric engine and the CLI."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Optional, Sequence, TypeVar

THREADS_ENV = "RPCIKIT_THREADS"

T = TypeVar("T")
R = TypeVar("R")


def worker_count(override: Optional[int] = None) -> int:
    """Explicit override, else ``RPCIKIT_THREADS``, else available parallelism."""
    if override is not None:
        n = int(override)
    else:
        env = os.environ.get(THREADS_ENV)
        n = int(env) if env else (os.cpu_count() or 1)
    return max(1, n)


def run_tasks(fn: Callable[[T], R], items: Sequence[T], workers: Optional[int] = None) -> List[R]:
    """Apply ``fn`` over ``items``, threaded when it pays off. Results keep the
    input order, so callers are deterministic regardless of pool size."""
    n = worker_count(workers)
    if n == 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=min(n, len(items))) as pool:
        return list(pool.map(fn, items))
