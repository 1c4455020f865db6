"""
Thread fan-out for independent CPU-bound jobs (multi-start fits, Monte Carlo blocks).

Usage:
    results = gather_in_threads([partial(job, i) for i in range(n)], workers=4)

Results come back in submission order regardless of completion order, so any
merge done on them is deterministic.
"""

import asyncio
from typing import Any, Callable, List, Sequence


async def _run_bounded(jobs: Sequence[Callable[[], Any]], workers: int, return_exceptions: bool) -> List[Any]:
    semaphore = asyncio.Semaphore(max(1, workers))

    async def run(job: Callable[[], Any]) -> Any:
        async with semaphore:
            return await asyncio.to_thread(job)

    return await asyncio.gather(*(run(job) for job in jobs), return_exceptions=return_exceptions)


def gather_in_threads(
    jobs: Sequence[Callable[[], Any]],
    workers: int = 4,
    return_exceptions: bool = False,
) -> List[Any]:
    """
    Run zero-argument callables on worker threads, at most `workers` at a time.

    Args:
        jobs: callables to execute
        workers: concurrency bound; 1 runs the jobs inline
        return_exceptions: place raised exceptions in the result list instead of propagating

    Returns:
        One result (or exception) per job, in submission order.
    """
    if not jobs:
        return []
    if workers <= 1:
        results: List[Any] = []
        for job in jobs:
            try:
                results.append(job())
            except Exception as exc:
                if not return_exceptions:
                    raise
                results.append(exc)
        return results
    return asyncio.run(_run_bounded(jobs, workers, return_exceptions))
