"""Array-carrying data records: datasets, block partitions and neighbor sets."""

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from ..core.config import settings
from ..core.exceptions import UsageError


@dataclass
class InputNormalization:
    """Affine map of raw inputs onto the unit cube, plus response scaling."""

    lower: np.ndarray
    upper: np.ndarray
    response_scale: float = 1.0

    def __post_init__(self) -> None:
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        if self.lower.shape != self.upper.shape:
            raise UsageError("Normalization bounds have mismatched shapes")
        if np.any(self.upper < self.lower):
            raise UsageError("Normalization upper bound below lower bound")

    @property
    def span(self) -> np.ndarray:
        span = self.upper - self.lower
        # constant columns map to 0
        return np.where(span > 0, span, 1.0)

    def apply(self, raw: np.ndarray) -> np.ndarray:
        raw = np.asarray(raw, dtype=float)
        if raw.ndim != 2 or raw.shape[1] != self.lower.size:
            raise UsageError(
                f"Expected {self.lower.size} input columns, got "
                f"{raw.shape[1] if raw.ndim == 2 else raw.ndim}"
            )
        return (raw - self.lower) / self.span

    @classmethod
    def from_data(
        cls, raw: np.ndarray, response_scale: float = 1.0
    ) -> "InputNormalization":
        raw = np.asarray(raw, dtype=float)
        return cls(raw.min(axis=0), raw.max(axis=0), response_scale)


@dataclass
class Dataset:
    """n points in d dimensions with responses and stable identities.

    ``points`` holds the coordinates all geometry is computed on. After
    scaling they live in scaled space and ``original`` keeps the normalized
    pre-scaling coordinates used for worker assignment and reporting.
    """

    points: np.ndarray
    responses: np.ndarray
    global_ids: np.ndarray = field(default=None)  # type: ignore[assignment]
    original: Optional[np.ndarray] = None
    beta: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        self.points = np.ascontiguousarray(self.points, dtype=float)
        if self.points.ndim == 1:
            self.points = self.points.reshape(-1, 1)
        if self.points.ndim != 2:
            raise UsageError("Dataset points must be a 2-d array")
        n, d = self.points.shape
        self.responses = np.ascontiguousarray(self.responses, dtype=float).ravel()
        if self.global_ids is None:
            self.global_ids = np.arange(n, dtype=np.int64)
        self.global_ids = np.asarray(self.global_ids, dtype=np.int64).ravel()
        if self.original is None:
            self.original = self.points
        else:
            self.original = np.ascontiguousarray(self.original, dtype=float)

        if self.responses.size != n or self.global_ids.size != n:
            raise UsageError(
                f"Dataset has {n} points but {self.responses.size} responses "
                f"and {self.global_ids.size} ids"
            )
        if not 1 <= d <= settings.max_input_dim:
            raise UsageError(
                f"Input dimension {d} outside [1, {settings.max_input_dim}]"
            )
        finite = np.all(np.isfinite(self.points)) and np.all(
            np.isfinite(self.responses)
        )
        if not finite:
            raise UsageError("Dataset contains NaN or Inf values")
        if np.unique(self.global_ids).size != n:
            raise UsageError("Dataset global ids are not unique")

    @property
    def n(self) -> int:
        return int(self.points.shape[0])

    @property
    def d(self) -> int:
        return int(self.points.shape[1])

    def subset(self, rows: np.ndarray) -> "Dataset":
        rows = np.asarray(rows, dtype=np.int64)
        assert self.original is not None
        return Dataset(
            points=self.points[rows],
            responses=self.responses[rows],
            global_ids=self.global_ids[rows],
            original=self.original[rows],
            beta=self.beta,
        )

    def with_responses(self, responses: np.ndarray) -> "Dataset":
        return Dataset(
            points=self.points,
            responses=responses,
            global_ids=self.global_ids,
            original=self.original,
            beta=self.beta,
        )


@dataclass
class BlockPartition:
    """Disjoint blocks over a dataset with centers and the global order.

    ``blocks[i]`` holds row positions into the dataset. ``order`` lists block
    indices in processing order; ``rank[i]`` is block i's position in it.
    """

    blocks: List[np.ndarray]
    centers: np.ndarray
    order: np.ndarray
    workers: np.ndarray
    radii: np.ndarray
    n_workers: int = 1
    load_imbalance: float = 1.0

    def __post_init__(self) -> None:
        self.blocks = [np.asarray(b, dtype=np.int64) for b in self.blocks]
        self.centers = np.asarray(self.centers, dtype=float)
        self.order = np.asarray(self.order, dtype=np.int64)
        self.workers = np.asarray(self.workers, dtype=np.int64)
        self.radii = np.asarray(self.radii, dtype=float)

    @property
    def n_blocks(self) -> int:
        return len(self.blocks)

    @property
    def sizes(self) -> np.ndarray:
        return np.array([b.size for b in self.blocks], dtype=np.int64)

    @property
    def rank(self) -> np.ndarray:
        rank = np.empty(self.n_blocks, dtype=np.int64)
        rank[self.order] = np.arange(self.n_blocks, dtype=np.int64)
        return rank

    def point_ranks(self, n: int) -> np.ndarray:
        """Block order rank of every dataset row."""
        out = np.full(n, -1, dtype=np.int64)
        rank = self.rank
        for i, members in enumerate(self.blocks):
            out[members] = rank[i]
        return out

    def validate(self, n: int) -> None:
        """Check the disjoint-cover and ordering invariants."""
        if any(b.size == 0 for b in self.blocks):
            raise UsageError("Partition contains an empty block")
        members = np.concatenate(self.blocks) if self.blocks else np.empty(0)
        if members.size != n or np.unique(members).size != n:
            raise UsageError("Partition blocks are not a disjoint cover")
        if sorted(self.order.tolist()) != list(range(self.n_blocks)):
            raise UsageError("Block order is not a permutation")


@dataclass
class NeighborSets:
    """Per-block conditioning sets, sorted by ascending distance to the center.

    ``neighbors[i]`` holds training row positions for block i. In estimation
    mode every neighbor belongs to a block strictly earlier in the order.
    """

    neighbors: List[np.ndarray]
    mode: str = "estimation"
    escalations: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    lambda_points: float = 0.0

    @property
    def total_escalations(self) -> int:
        return int(np.sum(self.escalations))

    @property
    def escalation_free_share(self) -> float:
        """Share of blocks whose first radius already sufficed."""
        if self.escalations.size == 0:
            return 1.0
        return float(np.mean(self.escalations == 0))
