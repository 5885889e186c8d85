"""Order-preserving process-pool map and worker-count resolution."""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor


def default_workers() -> int:
    """Worker count from ``SINAI_THREADS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("SINAI_THREADS", "1")))
    except ValueError:
        return 1


def ordered_map(fn, items, workers: int | None = None, chunksize: int = 1) -> list:
    """``[fn(x) for x in items]``, optionally spread over processes.

    Results come back in input order whatever the scheduling, so any
    reduction over them is independent of ``workers``.
    """
    items = list(items)
    workers = default_workers() if workers is None else workers
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items, chunksize=chunksize))
