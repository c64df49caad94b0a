"""Small shared helpers: reproducible RNG streams and thread budget."""

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np


def thread_count() -> int:
    """Worker threads for embarrassingly parallel sweeps.

    Controlled by the NCTEST_THREADS environment variable; 0 or unset
    means one thread per available CPU.
    """
    raw = os.environ.get("NCTEST_THREADS", "0")
    try:
        k = int(raw)
    except ValueError:
        k = 0
    if k <= 0:
        k = os.cpu_count() or 1
    return k


def rep_rng(seed: int, rep: int) -> np.random.Generator:
    """Independent generator for replication `rep` of a run seeded by `seed`.

    Streams depend only on (seed, rep), never on scheduling, so results
    are identical for any thread count.
    """
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(rep,)))


def map_reps(worker, n_reps: int, threads: int | None = None) -> list:
    """Run worker(rep) for rep in range(n_reps), results ordered by rep."""
    if threads is None:
        threads = thread_count()
    if threads <= 1 or n_reps <= 1:
        return [worker(r) for r in range(n_reps)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(worker, range(n_reps)))
