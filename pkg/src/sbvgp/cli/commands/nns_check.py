"""``sbvgp nns-check``: compare the filtered search with the exhaustive one."""

import argparse
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np

from ...core.exceptions import SBVError
from ...core.logging import get_logger
from ...models.run import RunConfig
from ...services.distsim import WorkerGroup
from ...services.io import dataset_store
from ...services.nns import oracle_neighbors
from ...services.vecchia import preprocess
from ..common import load_config

logger = get_logger(__name__)


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser(
        "nns-check", help="Check neighbor sets against the exhaustive search"
    )
    parser.add_argument("data", type=Path, help="CSV dataset")
    parser.add_argument("config", type=Path, help="Run configuration file")
    parser.add_argument(
        "--output", type=Path, default=None, help="Optional report to write"
    )
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> None:
    config = load_config(args.config, args.workers, RunConfig)
    dataset, _ = dataset_store.read_dataset(
        args.data, input_bounds=config.input_bounds
    )
    vecchia = config.vecchia_config()
    params = config.kernel_params(dataset.d)
    group = WorkerGroup(vecchia.workers)
    prep = preprocess(dataset, vecchia, params, group)
    oracle = oracle_neighbors(prep.scaled, prep.partition, vecchia.m_est)
    mismatches = sum(
        not np.array_equal(found, expected)
        for found, expected in zip(prep.neighbors.neighbors, oracle)
    )
    summary: Dict[str, Any] = {
        "blocks": prep.partition.n_blocks,
        "m": vecchia.m_est,
        "mismatches": mismatches,
        "escalations": prep.neighbors.total_escalations,
        "escalation_free_share": prep.neighbors.escalation_free_share,
        "lambda": prep.neighbors.lambda_points,
        "payloads_sent": group.payloads_sent,
    }
    for key, value in summary.items():
        print(f"{key} = {value}")
    output: Optional[Path] = args.output
    if output is not None:
        dataset_store.write_report(output, summary)
    if mismatches:
        raise SBVError(f"{mismatches} neighbor sets differ from the exhaustive search")
