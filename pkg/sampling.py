"""
Random stream management and batch-parallel sample collection.

All randomness flows from one root Generator. Work is cut into fixed-size
batches and every batch gets its own child stream, so results depend only
on the seed and batch size, never on the number of workers.
"""

from concurrent.futures import ProcessPoolExecutor
from typing import Callable, List, Optional

import numpy as np
from tqdm import tqdm

from exceptions import ParameterError

DEFAULT_BATCH_SIZE = 500


def make_rng(seed: Optional[int]) -> np.random.Generator:
    return np.random.default_rng(seed)


def spawn_streams(rng: np.random.Generator, count: int) -> List[np.random.Generator]:
    """Deterministically split a generator into independent child streams."""
    if count < 0:
        raise ParameterError(f"cannot spawn {count} streams")
    return rng.spawn(count)


def collect(fn: Callable[[np.random.Generator, int], np.ndarray], n_samples: int,
            rng: np.random.Generator, workers: int = 1,
            batch_size: int = DEFAULT_BATCH_SIZE, desc: Optional[str] = None) -> np.ndarray:
    """
    Run `fn(stream, count)` over batches and stack the returned rows.

    Args:
        fn: module-level callable returning an (count, k) array
        n_samples: total number of rows
        rng: root generator; one child stream per batch is spawned from it
        workers: process count (1 runs inline)
        batch_size: rows per batch
        desc: progress bar label; None disables the bar

    Returns:
        (n_samples, k) array in batch order
    """
    if n_samples <= 0:
        raise ParameterError(f"n_samples must be positive, got {n_samples}")
    if batch_size <= 0:
        raise ParameterError(f"batch_size must be positive, got {batch_size}")

    sizes = [batch_size] * (n_samples // batch_size)
    if n_samples % batch_size:
        sizes.append(n_samples % batch_size)
    streams = spawn_streams(rng, len(sizes))

    results = []
    if workers > 1 and len(sizes) > 1:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            futures = [executor.submit(fn, stream, size) for stream, size in zip(streams, sizes)]
            for future in tqdm(futures, total=len(futures), desc=desc, disable=desc is None):
                results.append(np.asarray(future.result(), dtype=float))
    else:
        for stream, size in tqdm(list(zip(streams, sizes)), desc=desc, disable=desc is None):
            results.append(np.asarray(fn(stream, size), dtype=float))

    rows = [r if r.ndim == 2 else r[:, None] for r in results]
    return np.vstack(rows)
