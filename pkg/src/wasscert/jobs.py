"""Ordered parallel map over independent jobs.

Results come back in submission order whatever the completion order, so
aggregation is a deterministic fold. ``WASSCERT_THREADS`` caps the worker
count (default: ``os.cpu_count()``); one worker runs in-process.
"""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, Optional

from .errors import ConfigError


def worker_count() -> int:
    raw = os.environ.get("WASSCERT_THREADS")
    if raw:
        try:
            n = int(raw)
        except ValueError:
            raise ConfigError("WASSCERT_THREADS", "must be a positive integer") from None
        if n < 1:
            raise ConfigError("WASSCERT_THREADS", "must be a positive integer")
        return n
    return os.cpu_count() or 1


def parallel_map(fn: Callable, jobs: Iterable, workers: Optional[int] = None) -> list:
    jobs = list(jobs)
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(jobs) <= 1:
        return [fn(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
        return list(pool.map(fn, jobs))
