import argparse
import logging
from pathlib import Path

from pathogan.commands import DEVICES, resolve_threshold
from pathogan.commands.infer import input_slices
from pathogan.dependencies import load_model
from pathogan.errors import ConfigError
from pathogan.models.domain import Domain
from pathogan.services.checkpoint import checkpoint_digest
from pathogan.services.evaluation import REFERENCE_SCORES, evaluate_dataset, format_table, write_report

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("evaluate", help="score segmentations against manual masks")
    parser.add_argument("--checkpoint", type=Path, required=True)
    parser.add_argument("--data", type=Path, default=None, help="manifest (defaults to data.manifest of the checkpoint)")
    parser.add_argument("--threshold", type=float, default=None, help="eval.threshold")
    parser.add_argument("--split", choices=("train", "test", "all"), default=None, help="eval.split")
    parser.add_argument("--batch-size", type=int, default=None, help="eval.batch_size")
    parser.add_argument("--out", type=Path, default=None, help="report directory (default: next to the checkpoint)")
    parser.add_argument("--device", choices=DEVICES, default=None, help="train.device of the checkpoint by default")
    parser.add_argument("--seed", type=int, default=None, help="accepted for symmetry; evaluation draws nothing")
    parser.set_defaults(handler=cmd_evaluate)


def cmd_evaluate(args: argparse.Namespace) -> int:
    model, config, _ = load_model(args.checkpoint, args.device)
    threshold = resolve_threshold(args.threshold, config)
    split = args.split or config.eval.split
    batch_size = args.batch_size or config.eval.batch_size
    if args.data is not None and args.data.suffix == ".npy":
        raise ConfigError("evaluate needs a manifest with manual segmentations, not an array")

    slices = input_slices(args.data, config, split, Domain.B_PATHOLOGICAL)
    record = evaluate_dataset(model, slices, threshold, batch_size)
    out_dir = args.out or args.checkpoint.parent / f"eval_{split}"
    echo = config.echo()
    echo["eval"] = {**echo["eval"], "threshold": threshold, "split": split, "batch_size": batch_size}
    write_report(record, out_dir, echo, checkpoint_digest(args.checkpoint), split)

    print(format_table(record, reference=split if split in REFERENCE_SCORES else "test"))
    return 0
