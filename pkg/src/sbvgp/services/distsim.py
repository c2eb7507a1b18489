"""In-process simulation of the collectives a P-worker run relies on.

Collectives are bulk-synchronous: one call receives every worker's
contribution for the epoch and returns every worker's result, ordered by
rank. Worker compute phases run through :meth:`WorkerGroup.run`, either
sequentially (the reference scheduler) or on a thread pool; the results are
identical because collectives never depend on execution interleaving.
"""

import copy
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Callable, List, Optional, Sequence, Tuple, TypeVar, Union

import numpy as np

from ..core.config import settings
from ..core.exceptions import UsageError
from ..core.logging import get_logger

logger = get_logger(__name__)

T = TypeVar("T")
Operand = Union[float, Sequence[float], np.ndarray]


class WorkerGroup:
    """P simulated workers with mailboxes and an epoch counter."""

    def __init__(
        self,
        size: int,
        executor: Optional[str] = None,
        max_threads: Optional[int] = None,
    ) -> None:
        """Initialize the worker group."""
        if size < 1:
            raise UsageError(f"Worker count must be >= 1, got {size}")
        self.size = size
        self.executor = executor or settings.executor
        if self.executor not in {"sequential", "threads"}:
            raise UsageError(f"Unknown executor {self.executor!r}")
        self.max_threads = max_threads or settings.thread_workers
        self.epoch = 0
        self.payloads_sent = 0
        self._mailboxes: List[List[Any]] = [[] for _ in range(size)]

    def run(self, fn: Callable[[int], T]) -> List[T]:
        """Run ``fn(rank)`` for every worker; results in rank order."""
        if self.executor == "threads" and self.size > 1:
            with ThreadPoolExecutor(max_workers=self.max_threads) as pool:
                return list(pool.map(fn, range(self.size)))
        return [fn(rank) for rank in range(self.size)]

    def _begin(self, name: str, contributions: Sequence[Any]) -> None:
        if len(contributions) != self.size:
            raise UsageError(
                f"{name} needs one contribution per worker: got "
                f"{len(contributions)} for {self.size} workers"
            )
        self.epoch += 1
        logger.debug(f"Epoch {self.epoch}: {name} across {self.size} workers")

    def all_to_all(
        self, outboxes: Sequence[Sequence[Tuple[int, Any]]]
    ) -> List[List[Any]]:
        """Deliver every (dest, payload) to dest's inbox.

        Inboxes are ordered by (source rank, emission order).
        """
        self._begin("all_to_all", outboxes)
        for source, outbox in enumerate(outboxes):
            for dest, _ in outbox:
                if not isinstance(dest, (int, np.integer)) or not 0 <= dest < self.size:
                    raise UsageError(
                        f"Worker {source} addressed invalid destination {dest!r}"
                    )
        for outbox in outboxes:
            for dest, payload in outbox:
                self._mailboxes[int(dest)].append(payload)
                self.payloads_sent += 1
        inboxes, self._mailboxes = self._mailboxes, [[] for _ in range(self.size)]
        return inboxes

    def all_gather(self, items: Sequence[Any]) -> List[List[Any]]:
        """Every worker receives its own copy of the rank-ordered items."""
        self._begin("all_gather", items)
        gathered = list(items)
        return [copy.deepcopy(gathered) for _ in range(self.size)]

    def all_reduce_sum(self, values: Sequence[Operand]) -> float:
        """Sum of all contributions, identical on every worker.

        A contribution is a real or a sequence of reals (a worker's partial
        terms). The sum is exactly rounded, so it does not depend on how the
        terms are spread over workers.
        """
        self._begin("all_reduce_sum", values)
        flat: List[float] = []
        for value in values:
            if np.ndim(value) == 0:
                flat.append(float(value))  # type: ignore[arg-type]
            else:
                flat.extend(np.asarray(value, dtype=float).ravel().tolist())
        return math.fsum(flat)

    def barrier(self) -> None:
        self._begin("barrier", [None] * self.size)
