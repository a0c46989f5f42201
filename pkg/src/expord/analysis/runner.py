"""Concurrent execution of independent verification samples."""

import logging
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from typing import Any

logger = logging.getLogger(__name__)


@dataclass
class RunResult:
    """Results of a sample run, in submission order."""

    results: list[Any] = field(default_factory=list)
    failed: list[tuple[int, Exception]] = field(default_factory=list)

    @property
    def total(self) -> int:
        """Total samples processed."""
        return len(self.results)

    @property
    def failure_count(self) -> int:
        """Number of samples that raised."""
        return len(self.failed)

    def raise_first(self) -> None:
        """Re-raise the exception of the earliest failing sample, if any."""
        if self.failed:
            raise min(self.failed, key=lambda item: item[0])[1]


class SampleRunner:
    """Run independent samples on a thread pool; results do not depend on the worker count."""

    def __init__(self, max_workers: int = 1):
        """Initialize the runner.

        Args:
            max_workers: Maximum number of concurrent workers.
        """
        self.max_workers = max(1, int(max_workers))

    def run(self, fn: Callable[..., Any], items: Sequence[Any]) -> RunResult:
        """Apply fn to every item.

        Args:
            fn: Function called with one item.
            items: Sample inputs, e.g. trajectories or (index, generator) tuples.

        Returns:
            RunResult with one slot per item (None for failed samples).
        """
        result = RunResult(results=[None] * len(items))
        if self.max_workers == 1:
            for index, item in enumerate(items):
                self._collect(result, index, lambda item=item: fn(item))
            return result

        with ThreadPoolExecutor(max_workers=self.max_workers) as executor:
            future_to_index = {executor.submit(fn, item): index for index, item in enumerate(items)}
            for future in as_completed(future_to_index):
                self._collect(result, future_to_index[future], future.result)
        return result

    @staticmethod
    def _collect(result: RunResult, index: int, get: Callable[[], Any]) -> None:
        try:
            result.results[index] = get()
        except Exception as e:
            result.failed.append((index, e))


def map_samples(fn: Callable[..., Any], items: Sequence[Any], workers: int = 1) -> list[Any]:
    """Run samples and propagate the first failure."""
    result = SampleRunner(workers).run(fn, items)
    if result.failure_count:
        logger.warning(f"{result.failure_count} of {result.total} samples raised")
    result.raise_first()
    return result.results
