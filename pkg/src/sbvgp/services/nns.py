"""Filtered exact m-nearest-neighbor search for block centers.

Each block searches its conditioning set among points of strictly earlier
blocks (estimation) or among all training points (prediction). The search
works on a small candidate subset: a coarse filter on block centers picks
candidate blocks, whose members travel to the querying worker through an
all-to-all; a fine filter keeps members within radius lambda of the block
center; a brute-force scan ranks the survivors. A block that finds fewer
than m admissible points while more exist retries with lambda doubled.
"""

import math
from dataclasses import dataclass
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.spatial import cKDTree

from ..core.exceptions import UsageError
from ..core.logging import get_logger
from ..models.data import BlockPartition, Dataset, NeighborSets
from .distsim import WorkerGroup
from .partition import squared_distances

logger = get_logger(__name__)

# relative slack on the coarse radius so KD-tree rounding never drops a block
_COARSE_SLACK = 1e-9
_NO_RANK = np.iinfo(np.int64).max
# queries per ball-query call; bounds the hit lists held at once
_QUERY_CHUNK = 512


@dataclass
class CandidateBlock:
    """Payload of one candidate block as shipped between workers."""

    block: int
    rank: int
    rows: np.ndarray
    points: np.ndarray
    gids: np.ndarray
    responses: np.ndarray


@dataclass
class CandidateSet:
    """Fine candidates of one query block."""

    rows: np.ndarray
    points: np.ndarray
    gids: np.ndarray

    @property
    def size(self) -> int:
        return int(self.rows.size)


@dataclass
class CandidatePool:
    """Received candidate blocks stacked into flat member arrays."""

    ranks: np.ndarray
    starts: np.ndarray
    sizes: np.ndarray
    rows: np.ndarray
    points: np.ndarray
    gids: np.ndarray

    @classmethod
    def from_blocks(cls, blocks: Sequence[CandidateBlock], d: int) -> "CandidatePool":
        sizes = np.array([c.rows.size for c in blocks], dtype=np.int64)
        if not blocks:
            return cls(
                ranks=np.empty(0, np.int64),
                starts=np.empty(0, np.int64),
                sizes=sizes,
                rows=np.empty(0, np.int64),
                points=np.empty((0, d)),
                gids=np.empty(0, np.int64),
            )
        return cls(
            ranks=np.array([c.rank for c in blocks], dtype=np.int64),
            starts=np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(np.int64),
            sizes=sizes,
            rows=np.concatenate([c.rows for c in blocks]),
            points=np.vstack([c.points for c in blocks]),
            gids=np.concatenate([c.gids for c in blocks]),
        )

    def members(self, blocks: Optional[np.ndarray] = None) -> np.ndarray:
        """Flat positions of the members of ``blocks`` (all blocks if None)."""
        if blocks is None:
            return np.arange(self.rows.size)
        blocks = np.asarray(blocks, dtype=np.int64)
        lengths = self.sizes[blocks]
        offsets = self.starts[blocks] - (np.cumsum(lengths) - lengths)
        return np.repeat(offsets, lengths) + np.arange(int(lengths.sum()))


def ball_constant(d: int) -> float:
    """zeta_d of the distance threshold."""
    if d % 2 == 0:
        return math.exp(math.lgamma(d / 2 + 1) - (d / 2) * math.log(math.pi))
    log_pi = ((d - 1) / 2) * math.log(math.pi)
    return 2.0 * math.exp(log_pi + math.lgamma((d + 1) / 2) - math.lgamma(d + 1))


def distance_threshold(n: int, m: int, d: int, alpha: float = 100.0) -> float:
    """Monte-Carlo radius lambda = (alpha m zeta_d / n)^(1/d) on the unit cube."""
    if n < 1 or m < 1 or d < 1:
        raise UsageError(f"n, m, d must be >= 1 (got n={n}, m={m}, d={d})")
    if alpha <= 0:
        raise UsageError(f"Expansion factor alpha must be > 0, got {alpha}")
    return float((alpha * m * ball_constant(d) / n) ** (1.0 / d))


def extent_scale(points: np.ndarray) -> float:
    """Geometric-mean side length of the points' bounding box.

    Rescales the unit-cube threshold to the (scaled) space the points occupy.
    """
    if points.shape[0] < 2:
        return 1.0
    extent = points.max(axis=0) - points.min(axis=0)
    top = float(extent.max())
    if top <= 0:
        return 1.0
    extent = np.maximum(extent, 1e-12 * top)
    return float(np.exp(np.mean(np.log(extent))))


def coarse_hits(
    tree: cKDTree,
    block_ranks: np.ndarray,
    query_centers: np.ndarray,
    query_radii: np.ndarray,
    query_ranks: np.ndarray,
    lambdas: np.ndarray,
    rho_max: float,
    ordered: bool = True,
) -> List[np.ndarray]:
    """Per-query positions of the tree's blocks passing the center filter.

    Block j qualifies for query i when ||c_i - c_j|| <= lambda_i + rho_i +
    rho_max and, with ``ordered``, block j precedes query i in the order.
    One ball query covers every query center.
    """
    radius = (np.asarray(lambdas) + np.asarray(query_radii) + rho_max) * (
        1.0 + _COARSE_SLACK
    )
    hits = tree.query_ball_point(query_centers, r=radius)
    out = []
    for qi, found in enumerate(hits):
        found = np.sort(np.asarray(found, dtype=np.int64))
        if ordered:
            found = found[block_ranks[found] < query_ranks[qi]]
        out.append(found)
    return out


def coarse_candidates(
    block_centers: np.ndarray,
    block_ranks: np.ndarray,
    query_centers: np.ndarray,
    query_radii: np.ndarray,
    query_ranks: np.ndarray,
    lambdas: np.ndarray,
    rho_max: float,
    ordered: bool = True,
) -> np.ndarray:
    """Positions of blocks that may hold a fine candidate of some query."""
    if block_centers.shape[0] == 0 or query_centers.shape[0] == 0:
        return np.empty(0, dtype=np.int64)
    hits = coarse_hits(
        cKDTree(block_centers),
        block_ranks,
        query_centers,
        query_radii,
        query_ranks,
        lambdas,
        rho_max,
        ordered,
    )
    keep = np.zeros(block_centers.shape[0], dtype=bool)
    for found in hits:
        keep[found] = True
    return np.flatnonzero(keep)


def fine_candidates(
    center: np.ndarray,
    candidates: Union[Sequence[CandidateBlock], CandidatePool],
    lam: float,
    my_rank: Optional[int] = None,
    blocks: Optional[np.ndarray] = None,
) -> CandidateSet:
    """Members of earlier candidate blocks strictly within lambda of the center.

    ``my_rank=None`` drops the ordering constraint (prediction). On a pool,
    ``blocks`` restricts the scan to those pool positions.
    """
    pool = (
        candidates
        if isinstance(candidates, CandidatePool)
        else CandidatePool.from_blocks(candidates, center.size)
    )
    if blocks is None:
        blocks = np.arange(pool.ranks.size)
    blocks = np.asarray(blocks, dtype=np.int64)
    if my_rank is not None:
        blocks = blocks[pool.ranks[blocks] < my_rank]
    take = pool.members(blocks)
    take = take[squared_distances(center, pool.points[take]) < lam * lam]
    return CandidateSet(pool.rows[take], pool.points[take], pool.gids[take])


def _chunks(items: np.ndarray) -> Iterator[np.ndarray]:
    for start in range(0, items.size, _QUERY_CHUNK):
        yield items[start : start + _QUERY_CHUNK]


def knn_brute(
    center: np.ndarray,
    points: np.ndarray,
    ids: np.ndarray,
    m: int,
    tie_keys: Optional[np.ndarray] = None,
) -> np.ndarray:
    """The min(m, |S|) nearest ids, ascending distance, ties by lower key."""
    ids = np.asarray(ids, dtype=np.int64)
    keys = ids if tie_keys is None else np.asarray(tie_keys, dtype=np.int64)
    if m <= 0 or ids.size == 0:
        return np.empty(0, dtype=np.int64)
    d2 = squared_distances(center, points)
    if ids.size > m:
        kth = np.partition(d2, m - 1)[m - 1]
        near = np.flatnonzero(d2 <= kth)
    else:
        near = np.arange(ids.size)
    ranked = near[np.lexsort((keys[near], d2[near]))]
    return ids[ranked[:m]]


def knn_oracle(
    center: np.ndarray,
    points: np.ndarray,
    ids: np.ndarray,
    m: int,
    tie_keys: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Exhaustive scan with the same distance and tie rule as knn_brute."""
    ids = np.asarray(ids, dtype=np.int64)
    keys = ids if tie_keys is None else np.asarray(tie_keys, dtype=np.int64)
    if m <= 0 or ids.size == 0:
        return np.empty(0, dtype=np.int64)
    d2 = squared_distances(center, points)
    scored = sorted(zip(d2.tolist(), keys.tolist(), ids.tolist()))
    return np.array([i for _, _, i in scored[:m]], dtype=np.int64)


def block_owners(partition: BlockPartition, P: int) -> np.ndarray:
    """Owning worker of every block for a group of P workers.

    Blocks keep the worker that built them when the partition was made for
    P workers; otherwise they are dealt round-robin in block order.
    """
    if partition.n_workers == P and partition.workers.size == partition.n_blocks:
        return partition.workers
    owners = np.empty(partition.n_blocks, dtype=np.int64)
    owners[partition.order] = np.arange(partition.n_blocks) % P
    return owners


def _admissible_counts(partition: BlockPartition) -> np.ndarray:
    """Points in blocks strictly earlier than each block."""
    sizes = partition.sizes
    before = np.concatenate([[0], np.cumsum(sizes[partition.order])[:-1]])
    return before[partition.rank]


def filtered_knn_all(
    dataset: Dataset,
    partition: BlockPartition,
    m: int,
    alpha: float = 100.0,
    group: Optional[WorkerGroup] = None,
    queries: Optional[Tuple[Dataset, BlockPartition]] = None,
) -> NeighborSets:
    """Exact m-NN conditioning sets for every query block.

    Without ``queries`` the blocks of ``partition`` query among earlier
    blocks (estimation). With ``queries=(test_data, test_partition)`` the
    test blocks query among all training points (prediction). Points and
    centers must already live in the same scaled space.
    """
    group = group or WorkerGroup(partition.n_workers)
    P = group.size
    prediction = queries is not None
    q_part = queries[1] if queries is not None else partition
    nq = q_part.n_blocks
    mode = "prediction" if prediction else "estimation"
    neighbors: List[np.ndarray] = [np.empty(0, dtype=np.int64)] * nq
    escalations = np.zeros(nq, dtype=np.int64)

    if m <= 0 or dataset.n == 0 or nq == 0:
        return NeighborSets(neighbors, mode=mode, escalations=escalations)

    lam0 = distance_threshold(dataset.n, m, dataset.d, alpha) * extent_scale(
        dataset.points
    )
    lambdas = np.full(nq, lam0)
    train_ranks = partition.rank
    train_owner = block_owners(partition, P)
    query_owner = block_owners(q_part, P) if prediction else train_owner
    if prediction:
        query_ranks = np.full(nq, _NO_RANK, dtype=np.int64)
        targets = np.full(nq, min(m, dataset.n), dtype=np.int64)
    else:
        query_ranks = train_ranks
        targets = np.minimum(m, _admissible_counts(partition))
    rho_max = float(partition.radii.max())

    # block metadata is replicated on every worker
    tables = group.all_gather(
        [
            (np.flatnonzero(train_owner == q), np.flatnonzero(query_owner == q))
            for q in range(P)
        ]
    )
    owned_blocks = [tables[0][q][0] for q in range(P)]

    def payload(j: int) -> CandidateBlock:
        rows = partition.blocks[j]
        return CandidateBlock(
            block=j,
            rank=int(train_ranks[j]),
            rows=rows,
            points=dataset.points[rows],
            gids=dataset.global_ids[rows],
            responses=dataset.responses[rows],
        )

    own_trees = [
        cKDTree(partition.centers[own]) if own.size else None for own in owned_blocks
    ]
    pending = np.flatnonzero(targets > 0)
    rounds = 0
    while pending.size:
        rounds += 1
        outboxes = []
        for q in range(P):
            own, tree = owned_blocks[q], own_trees[q]
            box = []
            for p in range(P):
                mine = pending[query_owner[pending] == p]
                if tree is None or mine.size == 0:
                    continue
                picked = np.zeros(own.size, dtype=bool)
                for chunk in _chunks(mine):
                    for found in coarse_hits(
                        tree,
                        train_ranks[own],
                        q_part.centers[chunk],
                        q_part.radii[chunk],
                        query_ranks[chunk],
                        lambdas[chunk],
                        rho_max,
                        ordered=not prediction,
                    ):
                        picked[found] = True
                box.extend((p, payload(int(j))) for j in own[picked])
            outboxes.append(box)
        inboxes = group.all_to_all(outboxes)
        group.barrier()

        def search(rank: int) -> Dict[int, Tuple[np.ndarray, int]]:
            mine = pending[query_owner[pending] == rank]
            received: List[CandidateBlock] = inboxes[rank]
            results: Dict[int, Tuple[np.ndarray, int]] = {}
            if not received:
                for i in mine:
                    results[int(i)] = (np.empty(0, dtype=np.int64), 0)
                return results
            pool = CandidatePool.from_blocks(received, q_part.centers.shape[1])
            tree = cKDTree(partition.centers[[c.block for c in received]])
            for chunk in _chunks(mine):
                hits = coarse_hits(
                    tree,
                    pool.ranks,
                    q_part.centers[chunk],
                    q_part.radii[chunk],
                    query_ranks[chunk],
                    lambdas[chunk],
                    rho_max,
                    ordered=not prediction,
                )
                for i, local in zip(chunk, hits):
                    i = int(i)
                    center = q_part.centers[i]
                    found = fine_candidates(
                        center,
                        pool,
                        float(lambdas[i]),
                        None if prediction else int(query_ranks[i]),
                        blocks=local,
                    )
                    ids = knn_brute(center, found.points, found.rows, m, found.gids)
                    results[i] = (ids, found.size)
            return results

        retry = []
        for results in group.run(search):
            for i, (ids, found) in results.items():
                if found < targets[i]:
                    lambdas[i] *= 2.0
                    escalations[i] += 1
                    retry.append(i)
                else:
                    neighbors[i] = ids
        pending = np.array(sorted(retry), dtype=np.int64)

    share = float(np.mean(escalations == 0))
    logger.info(
        f"NNS ({mode}) for {nq} blocks with m={m}: {rounds} round(s), "
        f"{int(escalations.sum())} escalations, {share:.1%} blocks escalation-free"
    )
    return NeighborSets(
        neighbors, mode=mode, escalations=escalations, lambda_points=lam0
    )


def oracle_neighbors(
    dataset: Dataset,
    partition: BlockPartition,
    m: int,
    queries: Optional[Tuple[Dataset, BlockPartition]] = None,
) -> List[np.ndarray]:
    """Exhaustive conditioning sets for every query block."""
    q_part = queries[1] if queries is not None else partition
    all_rows = np.arange(dataset.n)
    point_ranks = partition.point_ranks(dataset.n)
    ranks = partition.rank
    out = []
    for i in range(q_part.n_blocks):
        if queries is None:
            rows = all_rows[point_ranks < ranks[i]]
        else:
            rows = all_rows
        out.append(
            knn_oracle(
                q_part.centers[i],
                dataset.points[rows],
                rows,
                m,
                dataset.global_ids[rows],
            )
        )
    return out
