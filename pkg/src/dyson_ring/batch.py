"""Ordered parallel execution of independent solves."""

import asyncio
import logging
import threading
from concurrent.futures import Executor, ProcessPoolExecutor, ThreadPoolExecutor
from typing import Any, Callable, Iterable, List, Optional, Sequence, TypeVar

from .exceptions import DysonRingError, ErrorType
from .result import Err, Ok, Result

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


class BatchCancelled(DysonRingError):
    """Raised for items skipped after a stop request."""

    def __init__(self, index: int):
        super().__init__(
            "Batch item skipped after stop request",
            ErrorType.PRECONDITION,
            {"index": index},
        )


class BatchRunner:
    """Runs ``func(item)`` for many items and returns per-item Results.

    Results come back in input order regardless of completion order, so
    downstream aggregation does not depend on the worker count. With
    ``workers == 1`` everything runs in-process, one item after another.
    """

    def __init__(
        self,
        workers: int = 1,
        use_processes: bool = False,
        stop_event: Optional[threading.Event] = None,
    ):
        """Initialize batch runner.

        Args:
            workers: Max concurrent items
            use_processes: Run items in a process pool (func and items must pickle)
            stop_event: Items not yet started are skipped once this is set
        """
        if workers < 1:
            raise ValueError("workers must be >= 1")
        self.workers = workers
        self.use_processes = use_processes
        self.stop_event = stop_event

    def _stopped(self) -> bool:
        return self.stop_event is not None and self.stop_event.is_set()

    def _call(
        self, func: Callable[[T], R], item: T, index: int
    ) -> Result[R, Exception]:
        if self._stopped():
            return Err(BatchCancelled(index))
        try:
            return Ok(func(item))
        except DysonRingError as e:
            logger.warning(f"Batch item {index} failed: {e}")
            return Err(e)
        except Exception as e:
            logger.error(f"Batch item {index} raised unexpectedly: {e}", exc_info=True)
            return Err(e)

    def _executor(self) -> Executor:
        if self.use_processes:
            return ProcessPoolExecutor(max_workers=self.workers)
        return ThreadPoolExecutor(max_workers=self.workers)

    async def map_async(
        self, func: Callable[[T], R], items: Sequence[T]
    ) -> List[Result[R, Exception]]:
        """Run ``func`` over ``items`` concurrently, keeping input order."""
        semaphore = asyncio.Semaphore(self.workers)
        loop = asyncio.get_running_loop()

        with self._executor() as pool:

            async def run_with_semaphore(index: int, item: T) -> Result[R, Exception]:
                async with semaphore:
                    if self._stopped():
                        return Err(BatchCancelled(index))
                    try:
                        value = await loop.run_in_executor(pool, func, item)
                        return Ok(value)
                    except DysonRingError as e:
                        logger.warning(f"Batch item {index} failed: {e}")
                        return Err(e)

            tasks = [run_with_semaphore(i, item) for i, item in enumerate(items)]
            gathered = await asyncio.gather(*tasks, return_exceptions=True)

        results: List[Result[R, Exception]] = []
        for index, outcome in enumerate(gathered):
            if isinstance(outcome, (Ok, Err)):
                results.append(outcome)
            else:
                logger.error(f"Batch item {index} raised unexpectedly: {outcome}")
                results.append(Err(outcome))
        return results

    def map(
        self, func: Callable[[T], R], items: Iterable[T]
    ) -> List[Result[R, Exception]]:
        """Synchronous wrapper around :meth:`map_async`."""
        items = list(items)
        if self.workers == 1 or len(items) <= 1:
            return [self._call(func, item, i) for i, item in enumerate(items)]

        try:
            asyncio.get_running_loop()
            running = True
        except RuntimeError:
            running = False
        if not running:
            return asyncio.run(self.map_async(func, items))

        # Inside a running loop: drive a fresh loop on a helper thread.
        with ThreadPoolExecutor(max_workers=1) as helper:
            return helper.submit(asyncio.run, self.map_async(func, items)).result()


def run_batch(
    func: Callable[[Any], Any], items: Iterable[Any], workers: int = 1
) -> List[Result[Any, Exception]]:
    """Convenience wrapper for a one-off :class:`BatchRunner`."""
    return BatchRunner(workers=workers).map(func, items)
