"""``sbvgp benchmark``: run a scenario sweep into plot-ready CSV."""

import argparse
from pathlib import Path

from ...core.config import settings
from ...models.run import BenchmarkScenario
from ...services.benchmark import benchmark_service
from ..common import load_config


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser("benchmark", help="Run a benchmark scenario")
    parser.add_argument("scenario", type=Path, help="Scenario file")
    parser.add_argument(
        "output_dir",
        type=Path,
        nargs="?",
        default=None,
        help="Directory for metric tables (default: settings output_dir)",
    )
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> None:
    scenario = load_config(args.scenario, args.workers, BenchmarkScenario)
    output_dir = args.output_dir or settings.ensure_output_dir()
    path = benchmark_service.run(scenario, output_dir)
    print(f"table = {path}")
