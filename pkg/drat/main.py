from typing import List, Optional
import argparse
import json
import logging
import sys

from drat import VERSION
from drat.commands import bench, evaluate, export, generate, train, verify
from drat.core.config import get_settings
from drat.core.errors import DratError
from drat.core.logging import setup_logging

logger = logging.getLogger(__name__)

COMMANDS = [generate, train, evaluate, verify, bench, export]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="drat",
        description="3D deformable transformer for action recognition on synthetic clips",
    )
    parser.add_argument("--version", action="version", version=f"drat {VERSION}")
    subparsers = parser.add_subparsers(dest="command", metavar="COMMAND")
    subparsers.required = True
    for command in COMMANDS:
        command.register(subparsers)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on bad usage and 0 on --help / --version
        return int(exc.code or 0)

    settings = get_settings()
    setup_logging(settings)
    logger.info(f"Running {args.command}", extra={"environment": settings.environment, "threads": settings.threads})

    try:
        return args.func(args, settings)
    except DratError as exc:
        logger.error(f"{args.command} failed: {exc.detail}", extra={"error_context": exc.context})
        sys.stderr.write(json.dumps(exc.to_dict()) + "\n")
        return exc.exit_code
