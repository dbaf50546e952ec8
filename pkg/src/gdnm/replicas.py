"""Replica fan-out over a process pool with a deterministic merge."""

from __future__ import annotations

from collections.abc import Callable
from concurrent.futures import ProcessPoolExecutor
from typing import Any

import numpy as np

Task = Callable[[np.ndarray], Any]


def chunk_ids(n_replicas: int, chunk_size: int) -> list[np.ndarray]:
    """Replica ids split into consecutive chunks of at most chunk_size."""
    if n_replicas < 1:
        raise ValueError(f"n_replicas must be >= 1, got {n_replicas}")
    if chunk_size < 1:
        raise ValueError(f"chunk_size must be >= 1, got {chunk_size}")
    ids = np.arange(n_replicas, dtype=np.int64)
    return [ids[i : i + chunk_size] for i in range(0, n_replicas, chunk_size)]


def _merge(parts: list[Any]) -> Any:
    first = parts[0]
    if isinstance(first, tuple):
        return tuple(_merge([p[i] for p in parts]) for i in range(len(first)))
    if isinstance(first, np.ndarray):
        return np.concatenate(parts, axis=0)
    return parts


def fan_out(
    task: Task,
    n_replicas: int,
    workers: int = 1,
    chunk_size: int = 256,
    on_chunk: Callable[[int, int], None] | None = None,
) -> Any:
    """Run task(ids) over every chunk of replica ids and merge in replica order.

    A task returns an array (or a tuple of arrays) with one leading entry per
    replica id. The merged result does not depend on workers or chunk_size as
    long as the task derives everything from the ids it receives.
    """
    if workers < 1:
        raise ValueError(f"workers must be >= 1, got {workers}")
    chunks = chunk_ids(n_replicas, chunk_size)
    parts: list[Any] = []

    if workers == 1 or len(chunks) == 1:
        for i, ids in enumerate(chunks):
            parts.append(task(ids))
            if on_chunk is not None:
                on_chunk(i + 1, len(chunks))
        return _merge(parts)

    with ProcessPoolExecutor(max_workers=min(workers, len(chunks))) as pool:
        for i, part in enumerate(pool.map(task, chunks)):
            parts.append(part)
            if on_chunk is not None:
                on_chunk(i + 1, len(chunks))
    return _merge(parts)
