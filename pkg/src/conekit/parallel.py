"""Thread budget shared by the BLAS pool and sample-level parallel maps."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager

from threadpoolctl import threadpool_limits

from .errors import ValidationError

ENV_VAR = "CONEKIT_THREADS"


def thread_limit() -> int:
    """Value of ``CONEKIT_THREADS`` (default: CPU count)."""
    raw = os.environ.get(ENV_VAR, "").strip()
    if not raw:
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError:
        raise ValidationError(f"{ENV_VAR} must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ValidationError(f"{ENV_VAR} must be a positive integer, got {raw!r}")
    return n


def pmap(fn, items) -> list:
    """Ordered map, threaded up to :func:`thread_limit` workers."""
    items = list(items)
    workers = min(thread_limit(), len(items))
    if workers <= 1:
        return [fn(it) for it in items]
    # each worker runs single-threaded BLAS so results do not depend on scheduling
    with threadpool_limits(1), ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


@contextmanager
def capped():
    """Cap native thread pools at :func:`thread_limit` for the duration of a run."""
    with threadpool_limits(thread_limit()):
        yield
