# Copyright 2021 The Chemoflow Authors.

import argparse
import logging
import sys
from typing import List, Optional

from chemoflow.__version__ import version
from chemoflow.cli.commands import (
    EXIT_CONFIG_ERROR,
    EXIT_SOLVER_ERROR,
    cmd_kernels_verify,
    cmd_simulate,
    cmd_stationary,
    cmd_sweep,
)
from chemoflow.cli.config import SWEEP_PARAMS
from chemoflow.errors import ConfigError, SolverError

__all__ = ["build_parser", "parse_values", "main"]

logger = logging.getLogger(__name__)


def parse_values(text: str) -> List[float]:
    """Comma separated numbers; an empty string gives an empty list"""
    values = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        try:
            values.append(float(item))
        except ValueError:
            raise ConfigError("sweep.values", f"{item!r} is not a number")
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chemoflow",
        description="Minimizing-movement solver and verification suite for chemotaxis gradient flows",
    )
    parser.add_argument("--version", action="version", version=f"chemoflow {version}")
    parser.add_argument(
        "--log-level",
        default="INFO",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
    )
    parser.add_argument("--progress", action="store_true", default=False)
    parser.add_argument("--workers", type=int, default=1)

    commands = parser.add_subparsers(dest="command", required=True)

    simulate = commands.add_parser("simulate", help="run a trajectory")
    simulate.add_argument("config")

    stationary = commands.add_parser("stationary", help="solve for the stationary state")
    stationary.add_argument("config")

    kernels = commands.add_parser("kernels", help="kernel identities and bounds")
    kernels.add_argument("action", choices=["verify"])
    kernels.add_argument("--output", default=None)
    kernels.add_argument("--seed", type=int, default=42)

    sweep = commands.add_parser("sweep", help="one run per parameter value")
    sweep.add_argument("config")
    sweep.add_argument("--param", required=True, choices=list(SWEEP_PARAMS))
    sweep.add_argument("--values", required=True)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """
    Entry point of the ``chemoflow`` command.

    Exit codes are 0 on success, 1 when a check fails, 2 for configuration errors and 3 for
    solver failures.
    """
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, args.log_level),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )

    try:
        if args.command == "simulate":
            return cmd_simulate(args.config, progress=args.progress)
        if args.command == "stationary":
            return cmd_stationary(args.config, workers=args.workers)
        if args.command == "kernels":
            return cmd_kernels_verify(args.output, seed=args.seed)
        return cmd_sweep(
            args.config,
            args.param,
            parse_values(args.values),
            workers=args.workers,
            progress=args.progress,
        )
    except ConfigError as e:
        logger.error(f"invalid configuration: {e}")
        return EXIT_CONFIG_ERROR
    except SolverError as e:
        logger.error(f"solver failure: {e}")
        return EXIT_SOLVER_ERROR


if __name__ == "__main__":
    sys.exit(main())
