"""Seeded, order-preserving parallel map for independent replicas."""
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, List, Optional

import numpy as np

logger = logging.getLogger(__name__)


def worker_count(requested: Optional[int] = None) -> int:
    """Number of worker processes, capped by ``BCP_THREADS`` when set."""
    n = requested if requested is not None else (os.cpu_count() or 1)
    env = os.environ.get("BCP_THREADS")
    if env:
        try:
            n = min(n, int(env))
        except ValueError:
            logger.warning("ignoring non-integer BCP_THREADS=%r", env)
    return max(1, n)


def replica_seeds(master, count: int) -> List[np.random.SeedSequence]:
    """Child seeds ``0..count-1`` of ``master``.

    Child ``i`` depends only on ``(master, i)``, so results do not change
    with the degree of parallelism.
    """
    root = master if isinstance(master, np.random.SeedSequence) else np.random.SeedSequence(master)
    return [np.random.SeedSequence(root.entropy, spawn_key=root.spawn_key + (i,))
            for i in range(count)]


def pmap(func: Callable, items: Iterable, workers: Optional[int] = None) -> list:
    """``list(map(func, items))``, run in worker processes when allowed.

    ``func`` must be picklable.  Output order follows input order.
    """
    items = list(items)
    n = min(worker_count(workers), len(items))
    if n <= 1:
        return [func(x) for x in items]
    chunk = max(1, len(items) // (4 * n))
    with ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(func, items, chunksize=chunk))
