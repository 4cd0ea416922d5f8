"""Deterministic parallel execution of independent tasks.

Work is split into chunks whose boundaries depend only on the problem size
and ``chunk_size``, never on the worker count, and results are reduced in
task order.  Outputs are therefore identical for any number of threads.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, QGTLabError

ENV_THREADS = "QGTLAB_THREADS"


def resolve_threads(threads=None) -> int:
    if threads is None:
        threads = os.environ.get(ENV_THREADS, "1")
    if threads == "auto":
        return os.cpu_count() or 1
    try:
        n = int(threads)
    except (TypeError, ValueError):
        raise ConfigError(f"threads must be a positive integer or 'auto', got {threads!r}")
    if n < 1:
        raise ConfigError(f"threads must be >= 1, got {n}")
    return n


def run_tasks(fn: Callable, tasks: Sequence, threads=1) -> list:
    """``[fn(t) for t in tasks]`` on a bounded pool; errors carry the task index."""

    def call(item):
        index, task = item
        try:
            return fn(task)
        except QGTLabError as exc:
            raise exc.with_context(task=index)

    n = resolve_threads(threads)
    items = list(enumerate(tasks))
    if n == 1 or len(items) <= 1:
        return [call(it) for it in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(call, items))


def chunk_slices(n: int, chunk_size: int) -> list:
    if chunk_size < 1:
        raise ConfigError("chunk_size must be >= 1")
    return [slice(i, min(i + chunk_size, n)) for i in range(0, n, chunk_size)]


def map_points(fn: Callable, l1, l2, chunk_size: int = 256, threads=1):
    """Evaluate ``fn(l1_chunk, l2_chunk, chunk_index)`` over flattened points.

    ``fn`` returns a tuple of arrays aligned with its chunk; the concatenated
    arrays are reshaped back to the input shape.
    """
    l1, l2 = np.broadcast_arrays(np.asarray(l1, dtype=float), np.asarray(l2, dtype=float))
    shape = l1.shape
    f1, f2 = l1.ravel(), l2.ravel()
    slices = chunk_slices(f1.size, chunk_size)
    parts = run_tasks(lambda k: fn(f1[slices[k]], f2[slices[k]], k), range(len(slices)), threads)
    return tuple(np.concatenate(col).reshape(shape) for col in zip(*parts))
