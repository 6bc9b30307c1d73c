"""Batched execution of Monte Carlo work on a thread pool driven by asyncio."""

import asyncio
import concurrent.futures
import logging
from dataclasses import dataclass
from typing import Callable, List, TypeVar

logger = logging.getLogger("reinvest")

T = TypeVar("T")


@dataclass(frozen=True)
class Batch:
    """Paths [start, start + size) of a run; `index` selects the random stream of the batch."""

    index: int
    start: int
    size: int


def split_batches(n_paths: int, batch_size: int) -> List[Batch]:
    """Split `n_paths` into consecutive batches of `batch_size` paths (the last may be smaller).

    Examples:
        >>> from reinvest import split_batches
        >>> [b.size for b in split_batches(5, 2)]
        [2, 2, 1]
    """
    if not n_paths > 0:
        raise ValueError(f"n_paths must be > 0, but got {n_paths}")
    if not batch_size > 0:
        raise ValueError(f"batch_size must be > 0, but got {batch_size}")
    return [
        Batch(index, start, min(batch_size, n_paths - start))
        for index, start in enumerate(range(0, n_paths, batch_size))
    ]


async def _gather(func: Callable[[Batch], T], batches: List[Batch], workers: int) -> List[T]:
    loop = asyncio.get_running_loop()
    jobs = asyncio.Semaphore(workers)
    with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:

        async def run_in_pool(batch: Batch) -> T:
            async with jobs:
                stop = batch.start + batch.size
                logger.debug(f"Batch {batch.index}: paths {batch.start}..{stop}")
                return await loop.run_in_executor(pool, func, batch)

        return await asyncio.gather(*(run_in_pool(batch) for batch in batches))


def run_batches(
    func: Callable[[Batch], T], n_paths: int, batch_size: int, workers: int = 1
) -> List[T]:
    """Call `func` once per batch of paths on up to `workers` threads.

    Results are returned in batch order regardless of completion order.

    Args:
        func: Work for one batch. Must not share mutable state with other batches.
        n_paths: Total number of paths.
        batch_size: Paths per batch.
        workers: Maximum number of batches in flight.

    Returns:
        One result per batch, ordered by batch index.

    Raises:
        ValueError: If any count is not positive.

    Examples:
        >>> from reinvest import run_batches
        >>> run_batches(lambda batch: batch.size, n_paths=10, batch_size=4, workers=2)
        [4, 4, 2]
    """
    if not workers > 0:
        raise ValueError(f"workers must be > 0, but got {workers}")
    batches = split_batches(n_paths, batch_size)
    results = asyncio.run(_gather(func, batches, workers))
    logger.info(f"Ran {len(batches)} batches of up to {batch_size} paths on {workers} workers")
    return results
