"""Blockwise Vecchia log-likelihood, prediction and conditional simulation.

All four variants run through the same code path. Block variants (BV, SBV)
cluster with the configured block size while CV and SV use singleton blocks;
scaled variants (SV, SBV) build their geometry in the space x / beta while
CV and BV use the unit cube as is.
"""

import hashlib
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from ..core.config import settings
from ..core.exceptions import UsageError
from ..core.logging import get_logger
from ..models.data import BlockPartition, Dataset, NeighborSets
from ..models.kernel import KernelParams
from ..models.vecchia import BlockBatchEntry, VecchiaConfig
from .distsim import WorkerGroup
from .exact_gp import clamp_variances
from .kernel import cov_matrix
from .linalg import (
    cholesky_lower,
    forward_solve,
    gaussian_loglik,
    stacked_forward_solve,
)
from .nns import block_owners, filtered_knn_all
from .partition import build_partition
from .sampling import make_rng, normal_quantile, standard_normals

logger = get_logger(__name__)

_LOG_2PI = math.log(2.0 * math.pi)
# normal draws generated per chunk in conditional simulation
_SIM_CHUNK = 1 << 20


def geometry_beta(config: VecchiaConfig, params: KernelParams) -> np.ndarray:
    """Ranges the preprocessing geometry is built with."""
    if config.variant.is_scaled:
        return params.beta_array
    return np.ones(params.dim)


def cost_estimate(
    block_sizes: Sequence[int], neighbor_counts: Sequence[int]
) -> Tuple[float, int]:
    """Flops of one evaluation and bytes of the largest batch entry."""
    bs = np.asarray(block_sizes, dtype=float)
    m = np.asarray(neighbor_counts, dtype=float)
    flops = float(np.sum(m**3 / 3 + m**2 * bs + m * bs**2 + bs**3 / 3))
    peak = int(np.max(8 * (bs**2 + m**2 + m * bs))) if bs.size else 0
    return flops, peak


@dataclass
class Preprocessing:
    """Partition, ordering and conditioning sets computed once per fit."""

    partition: BlockPartition
    scaled: Dataset
    neighbors: NeighborSets
    beta: np.ndarray
    stats: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if len(self.neighbors.neighbors) != self.partition.n_blocks:
            raise UsageError(
                f"{len(self.neighbors.neighbors)} neighbor sets for "
                f"{self.partition.n_blocks} blocks"
            )
        counts = [nb.size for nb in self.neighbors.neighbors]
        flops, peak = cost_estimate(self.partition.sizes, counts)
        self.stats.setdefault("n_blocks", float(self.partition.n_blocks))
        self.stats.setdefault("flops", flops)
        self.stats.setdefault("peak_batch_bytes", float(peak))
        self.stats.setdefault("load_imbalance", self.partition.load_imbalance)
        self.stats.setdefault(
            "escalations", float(self.neighbors.total_escalations)
        )
        self.stats.setdefault(
            "escalation_free_share", self.neighbors.escalation_free_share
        )
        self.stats.setdefault("lambda", self.neighbors.lambda_points)

    @property
    def fingerprint(self) -> str:
        """sha256 over block membership, order and neighbor ids."""
        digest = hashlib.sha256()
        digest.update(np.ascontiguousarray(self.beta, dtype=float).tobytes())
        digest.update(self.partition.order.tobytes())
        for members, nb in zip(self.partition.blocks, self.neighbors.neighbors):
            digest.update(np.int64(members.size).tobytes())
            digest.update(members.tobytes())
            digest.update(np.int64(nb.size).tobytes())
            digest.update(nb.tobytes())
        return digest.hexdigest()


def preprocess(
    dataset: Dataset,
    config: VecchiaConfig,
    params: KernelParams,
    group: Optional[WorkerGroup] = None,
) -> Preprocessing:
    """Scale, cluster, order and search conditioning sets for estimation."""
    group = group or WorkerGroup(config.workers)
    beta = geometry_beta(config, params)
    partition, scaled = build_partition(
        dataset, beta, config.bs_est, config.cluster_seed, config.order_seed, group
    )
    neighbors = filtered_knn_all(scaled, partition, config.m_est, config.alpha, group)
    prep = Preprocessing(partition, scaled, neighbors, beta)
    prep.stats["payloads_sent"] = float(group.payloads_sent)
    logger.info(
        f"Preprocessed {dataset.n} points for {config.variant.value}: "
        f"{partition.n_blocks} blocks, m={config.m_est}, "
        f"fingerprint {prep.fingerprint[:12]}"
    )
    return prep


def assemble_batches(
    dataset: Dataset,
    partition: BlockPartition,
    neighbors: NeighborSets,
    params: KernelParams,
    blocks: Optional[Sequence[int]] = None,
) -> List[BlockBatchEntry]:
    """Covariance triplets of the requested blocks (all, by default).

    Covariances are evaluated on ``dataset.original`` with the kernel's own
    ranges, whatever geometry the partition was built in.
    """
    assert dataset.original is not None
    X = dataset.original
    y = dataset.responses
    if blocks is None:
        blocks = range(partition.n_blocks)
    entries = []
    for i in blocks:
        rows = partition.blocks[i]
        nb = neighbors.neighbors[i]
        xb, xn = X[rows], X[nb]
        entries.append(
            BlockBatchEntry(
                block=int(i),
                cov_block=cov_matrix(xb, xb, params, same=True),
                cov_cond=cov_matrix(xn, xn, params, same=True),
                cov_cross=cov_matrix(xn, xb, params),
                y_block=y[rows],
                y_cond=y[nb],
            )
        )
    return entries


def block_condition(entry: BlockBatchEntry) -> Tuple[np.ndarray, np.ndarray]:
    """Conditional mean and covariance of a block given its neighbors."""
    if entry.m == 0:
        return np.zeros(entry.bs), entry.cov_block
    lower = cholesky_lower(
        entry.cov_cond, what="conditioning", block=entry.block, stage="conditioning"
    )
    cross = forward_solve(lower, entry.cov_cross)
    y_cond = forward_solve(lower, entry.y_cond)
    return cross.T @ y_cond, entry.cov_block - cross.T @ cross


def block_loglik(entry: BlockBatchEntry) -> float:
    """log N(y_B; mu_new, Sigma_new) of one block."""
    mean, cov = block_condition(entry)
    lower = cholesky_lower(cov, what="block", block=entry.block, stage="block")
    return gaussian_loglik(lower, entry.y_block - mean)


def _group_by_shape(entries: Sequence[BlockBatchEntry]) -> List[List[int]]:
    """Entry positions grouped by (bs, m) and chunked by the memory budget."""
    groups: Dict[Tuple[int, int], List[int]] = defaultdict(list)
    for pos, entry in enumerate(entries):
        groups[(entry.bs, entry.m)].append(pos)
    budget = settings.batch_memory_mb * 2**20
    chunks = []
    for key in sorted(groups):
        members = groups[key]
        per_chunk = max(1, int(budget // max(entries[members[0]].nbytes, 1)))
        chunks.extend(
            members[s : s + per_chunk] for s in range(0, len(members), per_chunk)
        )
    return chunks


def _stacked_condition(
    entries: Sequence[BlockBatchEntry],
) -> Tuple[np.ndarray, np.ndarray]:
    """Stacked block_condition for entries of one (bs, m) shape."""
    cov = np.stack([e.cov_block for e in entries])
    if entries[0].m == 0:
        return np.zeros(cov.shape[:2]), cov
    lower = np.linalg.cholesky(np.stack([e.cov_cond for e in entries]))
    cross = stacked_forward_solve(lower, np.stack([e.cov_cross for e in entries]))
    y_cond = np.stack([e.y_cond for e in entries])[..., None]
    y_cond = stacked_forward_solve(lower, y_cond)
    cross_t = np.swapaxes(cross, 1, 2)
    return (cross_t @ y_cond)[..., 0], cov - cross_t @ cross


def _stacked_loglik(entries: Sequence[BlockBatchEntry]) -> List[float]:
    mean, cov = _stacked_condition(entries)
    lower = np.linalg.cholesky(cov)
    resid = np.stack([e.y_block for e in entries]) - mean
    v = stacked_forward_solve(lower, resid)
    diag = np.log(np.diagonal(lower, axis1=1, axis2=2))
    bs = entries[0].bs
    # exactly rounded per-entry sums keep a block's term independent of its stack
    return [
        -0.5 * math.fsum([math.fsum(vi * vi), 2.0 * math.fsum(di), bs * _LOG_2PI])
        for vi, di in zip(v, diag)
    ]


def batched_loglik(entries: Sequence[BlockBatchEntry]) -> np.ndarray:
    """Per-entry log-likelihood terms, in input order."""
    terms = np.zeros(len(entries))
    for chunk in _group_by_shape(entries):
        group = [entries[pos] for pos in chunk]
        try:
            values = _stacked_loglik(group)
        except np.linalg.LinAlgError:
            # rerun one by one to name the failing block and stage
            values = [block_loglik(e) for e in group]
        terms[chunk] = values
    return terms


def batched_condition(
    entries: Sequence[BlockBatchEntry],
) -> List[Tuple[np.ndarray, np.ndarray]]:
    """Per-entry conditional mean and marginal variances, in input order."""
    out: List[Tuple[np.ndarray, np.ndarray]] = [
        (np.empty(0), np.empty(0))
    ] * len(entries)
    for chunk in _group_by_shape(entries):
        group = [entries[pos] for pos in chunk]
        try:
            mean, cov = _stacked_condition(group)
            results = [
                (mean[k], np.diagonal(cov[k]).copy()) for k in range(len(group))
            ]
        except np.linalg.LinAlgError:
            results = []
            for e in group:
                mu, c = block_condition(e)
                results.append((mu, np.diagonal(c).copy()))
        for pos, result in zip(chunk, results):
            out[pos] = result
    return out


def budget_slices(sizes: np.ndarray, counts: np.ndarray) -> Iterator[slice]:
    """Consecutive runs of blocks whose covariance triplets fit the budget.

    A block larger than the budget forms a run of its own.
    """
    sizes = np.asarray(sizes, dtype=float)
    counts = np.asarray(counts, dtype=float)
    nbytes = 8.0 * (sizes * sizes + counts * counts + sizes * counts)
    budget = settings.batch_memory_mb * 2**20
    start, total = 0, 0.0
    for k, size in enumerate(nbytes):
        if k > start and total + size > budget:
            yield slice(start, k)
            start, total = k, 0.0
        total += size
    if start < nbytes.size:
        yield slice(start, nbytes.size)


def vecchia_terms(
    dataset: Dataset,
    prep: Preprocessing,
    params: KernelParams,
    group: WorkerGroup,
) -> List[np.ndarray]:
    """Per-worker block terms, each worker's list in block order."""
    if prep.scaled.n != dataset.n:
        raise UsageError(
            f"Preprocessing covers {prep.scaled.n} points, dataset has {dataset.n}"
        )
    owners = block_owners(prep.partition, group.size)
    rank = prep.partition.rank

    def work(worker: int) -> np.ndarray:
        mine = np.flatnonzero(owners == worker)
        mine = mine[np.argsort(rank[mine])]
        counts = [prep.neighbors.neighbors[i].size for i in mine]
        terms = [
            batched_loglik(
                assemble_batches(
                    dataset, prep.partition, prep.neighbors, params, mine[part]
                )
            )
            for part in budget_slices(prep.partition.sizes[mine], counts)
        ]
        return np.concatenate(terms) if terms else np.zeros(0)

    return group.run(work)


def vecchia_loglik(
    dataset: Dataset,
    config: VecchiaConfig,
    params: KernelParams,
    prep: Optional[Preprocessing] = None,
    group: Optional[WorkerGroup] = None,
) -> float:
    """Sum of blockwise conditional log-likelihoods.

    The sum is exactly rounded over terms in block order, so the result is
    bit-identical for a fixed preprocessing whatever the worker count.
    """
    group = group or WorkerGroup(config.workers)
    if prep is None:
        prep = preprocess(dataset, config, params, group)
    terms = vecchia_terms(dataset, prep, params, group)
    return group.all_reduce_sum(terms)


def vecchia_predict(
    train: Dataset,
    test: Dataset,
    config: VecchiaConfig,
    params: KernelParams,
    prep: Optional[Preprocessing] = None,
    group: Optional[WorkerGroup] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """Per-point predictive mean and variance of the test inputs.

    Test points are clustered into blocks of mean size ``bs_pred``; each
    block conditions on its ``m_pred`` nearest training points.
    """
    if test.d != train.d:
        raise UsageError(f"Training data has d={train.d}, test data d={test.d}")
    group = group or WorkerGroup(config.workers)
    beta = geometry_beta(config, params)
    if prep is not None and np.array_equal(prep.beta, beta):
        train_part, train_scaled = prep.partition, prep.scaled
    else:
        train_part, train_scaled = build_partition(
            train, beta, config.bs_est, config.cluster_seed, config.order_seed, group
        )
    test_part, test_scaled = build_partition(
        test, beta, config.bs_pred, config.cluster_seed, config.order_seed, group
    )
    neighbors = filtered_knn_all(
        train_scaled,
        train_part,
        config.m_pred,
        config.alpha,
        group,
        queries=(test_scaled, test_part),
    )
    owners = block_owners(test_part, group.size)
    assert train.original is not None and test.original is not None
    X, Xs, y = train.original, test.original, train.responses

    def entries_of(blocks: np.ndarray) -> List[BlockBatchEntry]:
        entries = []
        for i in blocks:
            rows, nb = test_part.blocks[i], neighbors.neighbors[i]
            xb, xn = Xs[rows], X[nb]
            entries.append(
                BlockBatchEntry(
                    block=int(i),
                    cov_block=cov_matrix(xb, xb, params, same=True),
                    cov_cond=cov_matrix(xn, xn, params, same=True),
                    cov_cross=cov_matrix(xn, xb, params),
                    y_block=np.zeros(rows.size),
                    y_cond=y[nb],
                )
            )
        return entries

    def work(worker: int) -> List[Tuple[int, np.ndarray, np.ndarray]]:
        mine = np.flatnonzero(owners == worker)
        counts = [neighbors.neighbors[i].size for i in mine]
        out = []
        for part in budget_slices(test_part.sizes[mine], counts):
            entries = entries_of(mine[part])
            out.extend(
                (e.block, mu, var)
                for e, (mu, var) in zip(entries, batched_condition(entries))
            )
        return out

    mean = np.zeros(test.n)
    var = np.zeros(test.n)
    for results in group.run(work):
        for block, mu, v in results:
            rows = test_part.blocks[block]
            mean[rows] = mu
            var[rows] = v
    logger.info(
        f"Predicted {test.n} points in {test_part.n_blocks} blocks "
        f"(m_pred={config.m_pred})"
    )
    return mean, clamp_variances(var, settings.variance_clamp)


def conditional_simulate(
    mean: np.ndarray,
    variance: np.ndarray,
    n_sim: int = 1000,
    seed: int = 0,
    ci_level: float = 0.95,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Sample mean, sample sd and confidence bounds from n_sim normal draws."""
    mean = np.asarray(mean, dtype=float).ravel()
    variance = np.asarray(variance, dtype=float).ravel()
    if mean.size != variance.size:
        raise UsageError("mean and variance lengths differ")
    if n_sim < 2:
        raise UsageError(f"n_sim must be >= 2, got {n_sim}")
    if not 0.0 < ci_level < 1.0:
        raise UsageError(f"ci_level must lie in (0, 1), got {ci_level}")
    if np.any(variance < 0) or np.any(~np.isfinite(variance)):
        raise UsageError("Predictive variances must be finite and non-negative")

    rng = make_rng(seed)
    sd = np.sqrt(variance)
    sim_mean = np.empty(mean.size)
    sim_sd = np.empty(mean.size)
    rows_per_chunk = max(1, _SIM_CHUNK // n_sim)
    for start in range(0, mean.size, rows_per_chunk):
        stop = min(start + rows_per_chunk, mean.size)
        z = standard_normals(rng, (stop - start, n_sim))
        draws = mean[start:stop, None] + sd[start:stop, None] * z
        sim_mean[start:stop] = draws.mean(axis=1)
        sim_sd[start:stop] = draws.std(axis=1, ddof=1)
    z_half = normal_quantile(1.0 - (1.0 - ci_level) / 2.0)
    return sim_mean, sim_sd, sim_mean - z_half * sim_sd, sim_mean + z_half * sim_sd

