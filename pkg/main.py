"""
Quadcopter point stabilization
Command-line entry point: simulate, gains, verify, batch
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from config import get_settings
from data.presets import PRESETS
from handlers.command_handler import get_command_handler

logger = logging.getLogger(__name__)


def _setup_logging() -> None:
    logging.basicConfig(
        level=getattr(logging, get_settings().log_level.upper(), logging.INFO),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s"
    )


class _Parser(argparse.ArgumentParser):
    """Usage errors are configuration errors (exit 1)"""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="quadstab", description="Quadcopter point-stabilization controllers")
    sub = parser.add_subparsers(dest="command", required=True)

    simulate = sub.add_parser("simulate", help="run one closed-loop scenario")
    simulate.add_argument("config", type=Path, nargs="?")
    simulate.add_argument("--preset", choices=sorted(PRESETS), default=None,
                          help="run a built-in scenario instead of a config file")
    simulate.add_argument("--set", dest="overrides", action="append", default=[], metavar="PATH=VALUE",
                          help="override a config value, e.g. scenario.dt=0.0005 (repeatable)")
    simulate.add_argument("--out", type=Path, default=None, help="output directory")

    gains = sub.add_parser("gains", help="synthesize and certify gains")
    gains.add_argument("config", type=Path)
    gains.add_argument("--out", type=Path, default=None, help="output directory")

    verify = sub.add_parser("verify", help="run the built-in invariant checks")
    verify.add_argument("--seed", type=int, default=None)
    verify.add_argument("--trials", type=int, default=None, help="random points per check")
    verify.add_argument("--perturb", choices=["b4"], default=None, help=argparse.SUPPRESS)

    batch = sub.add_parser("batch", help="run several scenarios in parallel")
    batch.add_argument("configs", type=Path, nargs="+")
    batch.add_argument("--set", dest="overrides", action="append", default=[], metavar="PATH=VALUE")
    batch.add_argument("--out", type=Path, default=None)
    batch.add_argument("--workers", type=int, default=None)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "simulate" and (args.config is None) == (args.preset is None):
        parser.error("simulate needs either a config file or --preset")
    _setup_logging()
    handler = get_command_handler()

    if args.command == "simulate":
        return handler.cmd_simulate(args.config, args.overrides, args.out, args.preset)
    if args.command == "gains":
        return handler.cmd_gains(args.config, args.out)
    if args.command == "verify":
        return handler.cmd_verify(args.seed, args.trials, args.perturb)
    return handler.cmd_batch(args.configs, args.overrides, args.out, args.workers)


if __name__ == "__main__":
    sys.exit(main())
