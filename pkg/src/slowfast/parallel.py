"""Thread-pool map over the nogil integration kernel."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor


def default_threads() -> int:
    env = os.environ.get("SLOWFAST_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ValueError(f"SLOWFAST_THREADS must be a positive integer, got {env!r}") from None
        if n < 1:
            raise ValueError(f"SLOWFAST_THREADS must be a positive integer, got {env!r}")
        return n
    return os.cpu_count() or 1


def pmap(fn, items, threads: int | None = None) -> list:
    """Order-preserving map; runs serially when one thread is requested."""
    items = list(items)
    n = default_threads() if threads is None else threads
    if n <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=n) as ex:
        return list(ex.map(fn, items))
