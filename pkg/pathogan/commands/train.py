import argparse
import logging
from pathlib import Path

from pathogan.commands import add_config_arguments, config_from_args
from pathogan.config import describe_keys, override
from pathogan.dependencies import get_device
from pathogan.errors import ConfigError
from pathogan.services.datasets import build_training_set, load_slices
from pathogan.services.training import run_training

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser(
        "train",
        help="train a model on a dataset manifest",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="configuration keys (defaults):\n  " + "\n  ".join(describe_keys()),
    )
    add_config_arguments(parser)
    parser.add_argument("--epochs", type=int, default=None, help="train.epochs")
    parser.add_argument("--batch-size", type=int, default=None, help="train.batch_size")
    parser.add_argument("--run-dir", type=str, default=None, help="train.run_dir")
    parser.add_argument("--data", type=str, default=None, help="data.manifest")
    parser.add_argument("--resume", type=Path, default=None, help="checkpoint to continue from")
    parser.set_defaults(handler=cmd_train)


def cmd_train(args: argparse.Namespace) -> int:
    flags = []
    if args.epochs is not None:
        flags.append(override("train.epochs", args.epochs))
    if args.batch_size is not None:
        flags.append(override("train.batch_size", args.batch_size))
    if args.run_dir is not None:
        flags.append(override("train.run_dir", Path(args.run_dir).as_posix()))
    if args.data is not None:
        flags.append(override("data.manifest", Path(args.data).as_posix()))
    config = config_from_args(args, flags)

    if not config.data.manifest:
        raise ConfigError("data.manifest is not set (use --data or the configuration file)")
    slices = load_slices(Path(config.data.manifest), config.data)
    training_set = build_training_set(slices, config.data.counts, config.train.seed)
    final = run_training(config, training_set, resume=args.resume, device=get_device(config.train.device))
    print(final)
    return 0
