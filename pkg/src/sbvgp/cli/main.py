"""Command-line entry point."""

import argparse
import sys
from typing import List, Optional

from ..core.config import settings
from ..core.exceptions import SBVError, UsageError
from ..core.logging import get_logger, setup_logging
from .commands import benchmark, fit, nns_check, predict, simulate, split

logger = get_logger(__name__)

COMMANDS = (simulate, fit, predict, benchmark, nns_check, split)


def create_parser() -> argparse.ArgumentParser:
    """Create the argument parser with every subcommand registered."""
    parser = argparse.ArgumentParser(
        prog=settings.app_name,
        description="Scaled Block Vecchia Gaussian-process emulation",
    )
    parser.add_argument(
        "--version",
        action="version",
        version=f"{settings.app_name} {settings.app_version}",
    )
    parser.add_argument(
        "--workers",
        type=int,
        default=None,
        help="Simulated worker count P (overrides the config file)",
    )
    parser.add_argument("--log-level", default=None, help="Logging level")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for command in COMMANDS:
        command.register(subparsers)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point; returns the process exit code."""
    args = create_parser().parse_args(argv)
    setup_logging(level=args.log_level)
    try:
        args.handler(args)
    except UsageError as e:
        return _fail(e, 2)
    except SBVError as e:
        return _fail(e, 1)
    except Exception as e:
        logger.exception(f"Unexpected failure in {args.command}")
        return _fail(e, 1)
    return 0


def _fail(error: Exception, code: int) -> int:
    message = " ".join(str(error).split())
    logger.error(message)
    print(f"{settings.app_name}: error: {message}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
