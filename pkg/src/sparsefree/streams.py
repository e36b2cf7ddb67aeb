"""Counter-based random substreams and an order-preserving worker pool.

Every Monte Carlo trial draws from its own Philox stream keyed by
``(seed, domain, *indices)``. Results therefore depend only on the trial
key, never on how trials are spread over workers.
"""

from __future__ import annotations

import os
import struct
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Sequence, TypeVar

import numpy as np

# domain tags keep unrelated uses of one seed apart
POWER_TRIAL = 1
CALIBRATION_SIGNS = 2
CALIBRATION_SAMPLES = 3
DATA_TIES = 4

WORKERS_ENV = "SPARSEFREE_WORKERS"

T = TypeVar("T")


def float_key(x: float) -> int:
    """Integer key carrying the exact bits of a float."""
    return int.from_bytes(struct.pack("<d", float(x)), "little")


def substream(seed: int, *key: int) -> np.random.Generator:
    if seed < 0:
        raise ValueError(f"seed must be nonnegative, got {seed!r}")
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def default_workers() -> int:
    value = os.environ.get(WORKERS_ENV)
    if not value:
        return 1
    try:
        workers = int(value)
    except ValueError:
        raise ValueError(f"{WORKERS_ENV} must be an integer, got {value!r}") from None
    return max(1, workers)


def split_range(total: int, parts: int) -> list[tuple[int, int]]:
    parts = max(1, min(parts, total))
    bounds = np.linspace(0, total, parts + 1).round().astype(int)
    return [(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def run_chunks(fn: Callable[..., T], tasks: Sequence[tuple], workers: int = 1) -> list[T]:
    """Apply ``fn(*task)`` to every task, returning results in task order."""
    if workers <= 1 or len(tasks) <= 1:
        return [fn(*task) for task in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(fn, *task) for task in tasks]
        return [f.result() for f in futures]
