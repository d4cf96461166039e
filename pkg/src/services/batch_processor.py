"""
Batch processing on a thread or process pool - Monte-Carlo replicas run here.
Results always come back in item order, whatever order the workers finish in.
"""

import multiprocessing
from concurrent.futures import ProcessPoolExecutor, ThreadPoolExecutor, as_completed
from typing import Any, Callable, List, Optional, Sequence, Tuple

from src.utils.logger import setup_logger

logger = setup_logger(__name__)


class BatchProcessor:
    """Runs a function over many items with at most `max_workers` in flight.

    With `processes` the items run in spawned worker processes, so the
    function and its arguments must be picklable.
    """

    def __init__(self, max_workers: int = 4, processes: bool = False):
        self.max_workers = max_workers
        if processes:
            self.executor = ProcessPoolExecutor(max_workers=max_workers, mp_context=multiprocessing.get_context("spawn"))
        else:
            self.executor = ThreadPoolExecutor(max_workers=max_workers)
        self.failures: List[Tuple[int, BaseException]] = []

    def __enter__(self) -> "BatchProcessor":
        return self

    def __exit__(self, *exc_info) -> None:
        self.shutdown()

    def shutdown(self) -> None:
        self.executor.shutdown(wait=True, cancel_futures=True)

    def process_batch_sync(
        self,
        items: Sequence[Any],
        processor_func: Callable[[Any], Any],
        batch_size: int = 50,
        progress_callback: Optional[Callable[[int, int], None]] = None,
    ) -> List[Any]:
        """Process items batch by batch; failed items yield None and land in `failures`"""
        results: List[Any] = [None] * len(items)
        total_items = len(items)
        done = 0
        self.failures = []

        logger.info(f"processing {total_items} items, batch size {batch_size}, {self.max_workers} workers")

        for start in range(0, total_items, batch_size):
            batch = range(start, min(start + batch_size, total_items))
            future_to_index = {self.executor.submit(processor_func, items[i]): i for i in batch}

            for future in as_completed(future_to_index):
                index = future_to_index[future]
                try:
                    results[index] = future.result()
                except Exception as e:
                    logger.error(f"item {index} failed: {e}")
                    self.failures.append((index, e))
                done += 1
                if progress_callback:
                    progress_callback(done, total_items)

            logger.info(f"batch {start // batch_size + 1}/{(total_items - 1) // batch_size + 1} done")

        self.failures.sort(key=lambda item: item[0])
        logger.info(f"batch processing finished, {total_items - len(self.failures)}/{total_items} succeeded")
        return results


class ReplicaBatchProcessor(BatchProcessor):
    """Monte-Carlo runner: one task per seed, first failure (by replica index) re-raised"""

    def run_replicas(
        self,
        seeds: Sequence[int],
        replica_func: Callable[[int], Any],
        progress_callback: Optional[Callable[[int, int, str], None]] = None,
    ) -> List[Any]:
        def replica_progress_callback(completed: int, total: int):
            if progress_callback:
                progress_callback(completed, total, f"replicas: {completed}/{total}")

        results = self.process_batch_sync(
            list(seeds),
            replica_func,
            batch_size=max(1, 4 * self.max_workers),
            progress_callback=replica_progress_callback,
        )
        if self.failures:
            index, error = self.failures[0]
            logger.error(f"{len(self.failures)} replica(s) failed, first: replica {index} (seed {seeds[index]})")
            raise error
        return results
