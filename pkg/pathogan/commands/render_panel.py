import argparse
import logging
from pathlib import Path

import numpy as np

from pathogan.commands import DEVICES
from pathogan.commands.infer import input_slices
from pathogan.dependencies import load_model
from pathogan.errors import ConfigError
from pathogan.models.domain import Domain
from pathogan.services.datasets import stack_slices
from pathogan.services.evaluation import inpaint_healthy
from pathogan.services.panel import PanelArrays, save_panel
from pathogan.services.volumes import DataError

logger = logging.getLogger(__name__)

ARRAY_KEYS = ("inputs", "inpaintings", "probability", "translated")


def register(subparsers) -> None:
    parser = subparsers.add_parser("render-panel", help="render the inputs / inpaintings / translations figure panel")
    parser.add_argument("--out", type=Path, required=True, help="PNG path")
    parser.add_argument("--arrays", type=Path, default=None, help=f".npz with {', '.join(ARRAY_KEYS)} [, segmentation]")
    parser.add_argument("--checkpoint", type=Path, default=None, help="render from a checkpoint instead of --arrays")
    parser.add_argument("--data", type=Path, default=None, help="manifest (defaults to data.manifest of the checkpoint)")
    parser.add_argument("--split", choices=("train", "test", "all"), default=None)
    parser.add_argument("--patient", type=str, default=None)
    parser.add_argument("--slice", dest="slice_index", type=int, default=None)
    parser.add_argument("--device", choices=DEVICES, default=None, help="train.device of the checkpoint by default")
    parser.add_argument("--seed", type=int, default=None, help="accepted for symmetry; rendering draws nothing")
    parser.set_defaults(handler=cmd_render_panel)


def arrays_from_file(path: Path) -> PanelArrays:
    try:
        with np.load(path) as data:
            missing = [key for key in ARRAY_KEYS if key not in data]
            if missing:
                raise DataError(f"{path} lacks array(s) {', '.join(missing)}")
            return PanelArrays(
                inputs=data["inputs"],
                inpaintings=data["inpaintings"],
                probability=data["probability"],
                translated=data["translated"],
                segmentation=data["segmentation"] if "segmentation" in data else None,
            )
    except (OSError, ValueError) as e:
        raise DataError(f"Cannot read {path}: {e}") from e


def arrays_from_checkpoint(args: argparse.Namespace) -> PanelArrays:
    model, config, _ = load_model(args.checkpoint, args.device)
    slices = input_slices(args.data, config, args.split or config.eval.split, Domain.B_PATHOLOGICAL)
    chosen = [
        s for s in slices
        if (args.patient is None or s.patient_id == args.patient)
        and (args.slice_index is None or s.slice_index == args.slice_index)
    ]
    if not chosen:
        raise DataError(f"No pathological slice matches patient={args.patient} slice={args.slice_index}")
    s = chosen[0]
    result = inpaint_healthy(model, stack_slices([s]))
    logger.info("Rendering %s", s.key)
    return PanelArrays(
        inputs=s.data,
        inpaintings=result.inpaintings[0].cpu().numpy(),
        probability=result.labelmap[0, 0].cpu().numpy(),
        translated=result.output[0].cpu().numpy(),
        segmentation=s.gold_mask,
    )


def cmd_render_panel(args: argparse.Namespace) -> int:
    if (args.arrays is None) == (args.checkpoint is None):
        raise ConfigError("render-panel needs exactly one of --arrays or --checkpoint")
    arrays = arrays_from_file(args.arrays) if args.arrays is not None else arrays_from_checkpoint(args)
    print(save_panel(arrays, args.out))
    return 0
