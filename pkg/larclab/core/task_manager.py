"""
Task Manager - data-parallel execution of laboratory sweeps.

Work is cut into chunks, run on a thread pool and handed back in submission
order, so any reduction over the results (max count, first witness, first
violation) is the same for every thread count.
"""

import concurrent.futures
import logging
import time
from dataclasses import dataclass
from enum import Enum
from typing import Any, Callable, Iterable, Iterator, List, Optional, Sequence, TypeVar

logger = logging.getLogger(__name__)

T = TypeVar('T')
R = TypeVar('R')

ProgressCallback = Callable[[int, int], None]


class TaskStatus(Enum):
    """Status of a chunk of work."""
    PENDING = "pending"
    RUNNING = "running"
    COMPLETED = "completed"
    FAILED = "failed"
    CANCELLED = "cancelled"


@dataclass
class TaskResult:
    """Result of one chunk."""
    index: int
    status: TaskStatus
    result: Optional[Any] = None
    error: Optional[BaseException] = None
    duration: float = 0.0


def chunked(items: Iterable[T], size: int) -> Iterator[List[T]]:
    """Consecutive lists of at most `size` items."""
    if size < 1:
        raise ValueError("chunk size must be positive")
    chunk: List[T] = []
    for item in items:
        chunk.append(item)
        if len(chunk) == size:
            yield chunk
            chunk = []
    if chunk:
        yield chunk


class TaskManager:
    """
    Runs chunked work on a ThreadPoolExecutor.

    This class provides:
    - Ordered results regardless of completion order
    - Progress reporting through a callback
    - Early stop: once a chunk satisfies `stop_when`, later chunks are cancelled
    - Error propagation (the first failing chunk re-raises in the caller)
    """

    def __init__(self, threads: int = 1):
        if threads < 1:
            raise ValueError("threads must be at least 1")
        self.threads = threads

    def _run_chunk(self, index: int, func: Callable[[Sequence[T]], R], chunk: Sequence[T]) -> TaskResult:
        start_time = time.time()
        try:
            result = func(chunk)
            return TaskResult(index, TaskStatus.COMPLETED, result=result, duration=time.time() - start_time)
        except Exception as e:
            logger.exception(f"Chunk {index} failed")
            return TaskResult(index, TaskStatus.FAILED, error=e, duration=time.time() - start_time)

    def run(
        self,
        func: Callable[[Sequence[T]], R],
        chunks: Iterable[Sequence[T]],
        stop_when: Optional[Callable[[R], bool]] = None,
        progress: Optional[ProgressCallback] = None,
        total: Optional[int] = None,
    ) -> List[R]:
        """
        Apply `func` to every chunk and return the results in chunk order.

        Args:
            func: Worker called with one chunk
            chunks: Chunks of work items
            stop_when: Predicate on a chunk result; results after the first
                chunk satisfying it are dropped
            progress: Called with (chunks done, total) as results arrive in order
            total: Number of chunks, for progress reporting only

        Returns:
            Ordered chunk results, truncated after the first stopping chunk
        """
        results: List[R] = []
        if self.threads == 1:
            for index, chunk in enumerate(chunks):
                outcome = self._run_chunk(index, func, chunk)
                if not self._accept(outcome, results, stop_when, progress, total):
                    break
            return results

        with concurrent.futures.ThreadPoolExecutor(max_workers=self.threads) as executor:
            pending: List[concurrent.futures.Future] = []
            chunk_iter = enumerate(chunks)
            stopped = False
            # keep a bounded window of futures in flight, consumed in order
            for index, chunk in chunk_iter:
                pending.append(executor.submit(self._run_chunk, index, func, chunk))
                if len(pending) >= 2 * self.threads:
                    if not self._accept(pending.pop(0).result(), results, stop_when, progress, total):
                        stopped = True
                        break
            if stopped:
                for future in pending:
                    future.cancel()
                return results
            for i, future in enumerate(pending):
                if not self._accept(future.result(), results, stop_when, progress, total):
                    for later in pending[i + 1:]:
                        later.cancel()
                    break
        return results

    @staticmethod
    def _accept(outcome: TaskResult, results: List[Any], stop_when, progress, total) -> bool:
        if outcome.status == TaskStatus.FAILED:
            raise outcome.error  # type: ignore[misc]
        results.append(outcome.result)
        if progress:
            progress(len(results), total or 0)
        return not (stop_when and stop_when(outcome.result))

    def map(self, func: Callable[[T], R], items: Iterable[T], chunk_size: int = 64) -> List[R]:
        """Ordered per-item results."""
        out: List[R] = []
        for part in self.run(lambda chunk: [func(x) for x in chunk], chunked(items, chunk_size)):
            out.extend(part)
        return out


# Global instance for easy access
_task_manager: Optional[TaskManager] = None


def get_task_manager() -> TaskManager:
    """Get or create the global task manager instance."""
    global _task_manager
    if _task_manager is None:
        _task_manager = TaskManager()
    return _task_manager


def configure_task_manager(threads: int) -> TaskManager:
    """Replace the global task manager with one using `threads` workers."""
    global _task_manager
    _task_manager = TaskManager(threads)
    return _task_manager
