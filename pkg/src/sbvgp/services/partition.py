"""Anisotropic scaling, worker partitioning, random anchor clustering and
block ordering."""

from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.spatial import cKDTree

from ..core.exceptions import UsageError
from ..core.logging import get_logger
from ..models.data import BlockPartition, Dataset
from .distsim import WorkerGroup
from .sampling import make_rng

logger = get_logger(__name__)

# candidates fetched from the anchor tree before exact tie resolution
_ANCHOR_CANDIDATES = 8


def relevant_dim(beta: Sequence[float]) -> int:
    """Most relevant input: argmax 1/beta_i, ties to the lowest index."""
    beta_arr = np.asarray(beta, dtype=float)
    if beta_arr.size == 0 or np.any(beta_arr <= 0):
        raise UsageError("beta must be non-empty and positive")
    return int(np.argmax(1.0 / beta_arr))


def scale_inputs(dataset: Dataset, beta: Sequence[float]) -> Dataset:
    """Divide each original coordinate by its range; responses/ids unchanged."""
    beta_arr = np.asarray(beta, dtype=float)
    if beta_arr.size != dataset.d:
        raise UsageError(f"beta has {beta_arr.size} entries for d={dataset.d}")
    if np.any(beta_arr <= 0):
        raise UsageError("beta must be positive")
    assert dataset.original is not None
    return Dataset(
        points=dataset.original / beta_arr,
        responses=dataset.responses,
        global_ids=dataset.global_ids,
        original=dataset.original,
        beta=beta_arr,
    )


def partition_assign(x: float, P: int) -> int:
    """Worker for a normalized coordinate: floor(x P), with x = 1 -> P - 1."""
    return int(assign_workers(np.array([x]), P)[0])


def assign_workers(coords: np.ndarray, P: int) -> np.ndarray:
    """Vectorized partition_assign."""
    if P < 1:
        raise UsageError(f"Worker count must be >= 1, got {P}")
    coords = np.asarray(coords, dtype=float)
    if np.any(coords < 0.0) or np.any(coords > 1.0) or np.any(np.isnan(coords)):
        raise UsageError("Partition coordinates must lie in [0, 1]")
    return np.minimum(np.floor(coords * P).astype(np.int64), P - 1)


def squared_distances(center: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Squared Euclidean distances from one center to each row of ``points``.

    Accumulated dimension by dimension so every row's value is bitwise the
    same whatever subset of rows it is computed in.
    """
    out = np.zeros(points.shape[0])
    for j in range(points.shape[1]):
        diff = points[:, j] - center[j]
        out += diff * diff
    return out


def nearest_anchor(points: np.ndarray, anchors: np.ndarray) -> np.ndarray:
    """Index of the nearest anchor per point, ties to the lowest anchor index."""
    k = anchors.shape[0]
    if k == 1:
        return np.zeros(points.shape[0], dtype=np.int64)
    n_cand = min(_ANCHOR_CANDIDATES, k)
    _, cand = cKDTree(anchors).query(points, k=n_cand)
    cand = np.asarray(cand, dtype=np.int64).reshape(points.shape[0], n_cand)

    d2 = np.zeros(cand.shape)
    for j in range(points.shape[1]):
        diff = anchors[cand, j] - points[:, j : j + 1]
        d2 += diff * diff
    best = d2.min(axis=1)
    # lowest anchor index among the exact minimizers
    labels = np.where(d2 == best[:, None], cand, k).min(axis=1)

    if n_cand == k:
        return labels
    # every candidate tied: more tied anchors may exist beyond the candidates
    crowded = np.flatnonzero(np.all(d2 == best[:, None], axis=1))
    for i in crowded:
        full = squared_distances(points[i], anchors)
        labels[i] = int(np.flatnonzero(full == full.min())[0])
    return labels


def _group_members(labels: np.ndarray, k: int) -> List[np.ndarray]:
    order = np.argsort(labels, kind="stable")
    counts = np.bincount(labels, minlength=k)
    return np.split(order, np.cumsum(counts)[:-1])


def block_geometry(
    points: np.ndarray, blocks: List[np.ndarray]
) -> Tuple[np.ndarray, np.ndarray]:
    """Member-mean centers and max member-to-center radii."""
    d = points.shape[1]
    centers = np.zeros((len(blocks), d))
    radii = np.zeros(len(blocks))
    for i, members in enumerate(blocks):
        pts = points[members]
        centers[i] = pts.mean(axis=0)
        radii[i] = np.sqrt(squared_distances(centers[i], pts).max())
    return centers, radii


def rac_cluster(
    points: np.ndarray, k_p: int, seed: int, worker: int = 0
) -> BlockPartition:
    """Random anchor clustering of one worker's (scaled) points.

    Draws ``k_p`` anchors without replacement, assigns every point to its
    nearest anchor, keeps each anchor in its own block and recomputes the
    centers as member means. Block positions index into ``points``.
    """
    points = np.asarray(points, dtype=float)
    n_p = points.shape[0]
    if not 1 <= k_p <= n_p:
        raise UsageError(f"Anchor count k_p={k_p} outside [1, {n_p}]")

    rng = make_rng(seed, worker)
    anchors = rng.choice(n_p, size=k_p, replace=False)
    if k_p == n_p:
        labels = np.empty(n_p, dtype=np.int64)
    else:
        labels = nearest_anchor(points, points[anchors])
    labels[anchors] = np.arange(k_p)

    blocks = _group_members(labels, k_p)
    centers, radii = block_geometry(points, blocks)
    return BlockPartition(
        blocks=blocks,
        centers=centers,
        order=np.arange(k_p),
        workers=np.full(k_p, worker),
        radii=radii,
    )


def anchor_count(n_local: int, bs: int) -> int:
    """k_p = round(n_p / bs), kept within [1, n_p]."""
    if n_local == 0:
        return 0
    return int(min(max(round(n_local / bs), 1), n_local))


def reorder_blocks(
    partition: BlockPartition,
    seed: int,
    local_ids: Optional[np.ndarray] = None,
) -> BlockPartition:
    """Global random block order from keys drawn per (worker, local block).

    Worker w draws its keys from the stream keyed (seed, w), the j-th draw
    belonging to its j-th local block; the global order sorts the keys.
    """
    nb = partition.n_blocks
    if local_ids is None:
        local_ids = np.zeros(nb, dtype=np.int64)
        for w in np.unique(partition.workers):
            mine = np.flatnonzero(partition.workers == w)
            local_ids[mine] = np.arange(mine.size)
    keys = np.empty(nb)
    for w in np.unique(partition.workers):
        mine = np.flatnonzero(partition.workers == w)
        draws = make_rng(seed, int(w)).random(int(local_ids[mine].max()) + 1)
        keys[mine] = draws[local_ids[mine]]
    order = np.lexsort((np.arange(nb), keys))
    return BlockPartition(
        blocks=partition.blocks,
        centers=partition.centers,
        order=order,
        workers=partition.workers,
        radii=partition.radii,
        n_workers=partition.n_workers,
        load_imbalance=partition.load_imbalance,
    )


def build_partition(
    dataset: Dataset,
    geometry_beta: Union[Sequence[float], np.ndarray],
    bs: int,
    cluster_seed: int,
    order_seed: int,
    group: WorkerGroup,
) -> Tuple[BlockPartition, Dataset]:
    """Scale, redistribute over workers, cluster and order.

    ``dataset`` holds unit-cube inputs. Returns the global partition (block
    members are dataset row positions) and the scaled dataset.
    """
    P = group.size
    beta = np.asarray(geometry_beta, dtype=float)
    d_max = relevant_dim(beta)
    scaled = scale_inputs(dataset, beta)
    assert dataset.original is not None

    # data loading: contiguous chunks, then redistribution along d_max
    loaded = np.array_split(np.arange(dataset.n), P)
    outboxes = []
    for rows in loaded:
        # prediction inputs may leave the unit cube; clip for assignment only
        coords = np.clip(dataset.original[rows, d_max], 0.0, 1.0)
        dest = assign_workers(coords, P)
        outboxes.append([(q, rows[dest == q]) for q in np.unique(dest).tolist()])
    inboxes = group.all_to_all(outboxes)
    local_rows = [
        np.concatenate(inbox) if inbox else np.empty(0, dtype=np.int64)
        for inbox in inboxes
    ]

    def cluster(rank: int) -> Optional[BlockPartition]:
        rows = local_rows[rank]
        k_p = anchor_count(rows.size, bs)
        if k_p == 0:
            return None
        return rac_cluster(scaled.points[rows], k_p, cluster_seed, worker=rank)

    local_parts = group.run(cluster)

    blocks: List[np.ndarray] = []
    centers, radii, workers, local_ids = [], [], [], []
    for rank, part in enumerate(local_parts):
        if part is None:
            continue
        blocks.extend(local_rows[rank][members] for members in part.blocks)
        centers.append(part.centers)
        radii.append(part.radii)
        workers.append(np.full(part.n_blocks, rank))
        local_ids.append(np.arange(part.n_blocks))

    loads = np.array([rows.size for rows in local_rows], dtype=float)
    imbalance = float(loads.max() / loads.mean()) if loads.mean() > 0 else 1.0
    if imbalance > 1.5:
        logger.warning(f"Worker load imbalance {imbalance:.2f} (max/mean)")

    partition = reorder_blocks(
        BlockPartition(
            blocks=blocks,
            centers=np.vstack(centers),
            order=np.arange(len(blocks)),
            workers=np.concatenate(workers),
            radii=np.concatenate(radii),
            n_workers=P,
            load_imbalance=imbalance,
        ),
        order_seed,
        local_ids=np.concatenate(local_ids),
    )
    logger.info(
        f"Partitioned {dataset.n} points into {partition.n_blocks} blocks "
        f"on {P} workers (d_max={d_max}, imbalance={imbalance:.3f})"
    )
    return partition, scaled
