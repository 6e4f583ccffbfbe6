import argparse
import logging
import sys
from typing import List, Optional

from pydantic import ValidationError

from pathogan import __version__
from pathogan.commands import evaluate, infer, netspec, phantom, render_panel, train
from pathogan.config import get_settings
from pathogan.errors import ConfigError, PathoGANError
from pathogan.services.checkpoint import CheckpointError
from pathogan.services.netspec import NetSpecError
from pathogan.services.training import NonFiniteLoss, ResumeMismatch, RunDirectoryLocked
from pathogan.services.volumes import DataError

logger = logging.getLogger("pathogan")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NON_FINITE = 3
EXIT_IO = 4

# Include commands
COMMANDS = (phantom, train, infer, evaluate, render_panel, netspec)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pathogan",
        description="Weakly-supervised pathology segmentation, healthy inpainting and pathology sampling",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for command in COMMANDS:
        command.register(subparsers)
    return parser


def exit_code(error: Exception) -> int:
    if isinstance(error, NonFiniteLoss):
        return EXIT_NON_FINITE
    if isinstance(error, (ConfigError, NetSpecError, ResumeMismatch)):
        return EXIT_USAGE
    if isinstance(error, (CheckpointError, DataError, RunDirectoryLocked, OSError)):
        return EXIT_IO
    return 1


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        level = "DEBUG" if args.verbose else get_settings().log_level
    except ValidationError:
        level = "INFO"
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        return args.handler(args)
    except (PathoGANError, OSError) as e:
        logger.error("%s", e)
        return exit_code(e)


if __name__ == "__main__":
    sys.exit(main())
