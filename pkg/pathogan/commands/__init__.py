"""
Subcommands. Each module exposes register(subparsers) and sets a handler
that returns the process exit code.
"""
import argparse
import logging
from typing import Iterable, List, Optional

from pathogan.config import RunConfig, load_run_config, override
from pathogan.errors import ConfigError

DEVICES = ("auto", "cpu", "cuda")


def add_config_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=str, default=None, help="TOML configuration file")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override one configuration key, e.g. --set loss.lambda_cc=5 (repeatable)",
    )
    parser.add_argument("--seed", type=int, default=None, help="seed for every random draw (train.seed)")


def config_from_args(args: argparse.Namespace, extra: Iterable[str] = ()) -> RunConfig:
    """Defaults < environment < --config < --set < dedicated flags"""
    overrides: List[str] = list(args.overrides) + list(extra)
    if args.seed is not None:
        overrides.append(override("train.seed", args.seed))
    config = load_run_config(args.config, overrides)
    if not getattr(args, "verbose", False):
        logging.getLogger().setLevel(config.log_level.upper())
    return config


def resolve_threshold(value: Optional[float], config: RunConfig) -> float:
    threshold = config.eval.threshold if value is None else value
    if not 0.0 < threshold < 1.0:
        raise ConfigError(f"threshold must lie strictly between 0 and 1, got {threshold}")
    return threshold
