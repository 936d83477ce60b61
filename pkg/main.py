import argparse
import logging
import sys
from typing import List, Optional

import config
from commands import COMMANDS
from commands.common import EXIT_USAGE

# Configure logging; stderr keeps CSV on stdout machine-readable
logging.basicConfig(
    level=getattr(logging, config.LOG_LEVEL.upper(), logging.INFO),
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
    stream=sys.stderr,
)
logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="contraction-kit",
        description="Contraction rates for diffusions via reflection coupling: distances, bounds and Monte Carlo checks",
    )
    subparsers = parser.add_subparsers(dest="command_name", metavar="command")
    subparsers.required = True
    for module in COMMANDS.values():
        module.add_parser(subparsers)
    return parser


def run(argv: Optional[List[str]] = None) -> int:
    """Parse argv and dispatch; returns 0 on success, 1 on a failed check, 2 on a usage error"""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse exits 2 on bad usage and 0 for --help
        return e.code if isinstance(e.code, int) else EXIT_USAGE
    return args.handler(args)


if __name__ == "__main__":
    sys.exit(run())
