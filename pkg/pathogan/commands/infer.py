import argparse
import json
import logging
from pathlib import Path
from typing import Dict, List

import numpy as np
from PIL import Image

from pathogan.commands import DEVICES, resolve_threshold
from pathogan.config import RunConfig
from pathogan.dependencies import load_model, make_generator
from pathogan.models.domain import Domain, ImageSlice
from pathogan.services.checkpoint import checkpoint_digest
from pathogan.services.datasets import load_slices, stack_slices
from pathogan.services.evaluation import inpaint_healthy, sample_pathology, segment
from pathogan.services.panel import image_cell, probability_cell
from pathogan.services.volumes import DataError

logger = logging.getLogger(__name__)

MODES = ("segment", "inpaint", "sample")


def register(subparsers) -> None:
    parser = subparsers.add_parser("infer", help="segment, inpaint or sample with a trained checkpoint")
    parser.add_argument("--checkpoint", type=Path, required=True)
    parser.add_argument(
        "--input",
        type=Path,
        default=None,
        help="manifest (defaults to data.manifest of the checkpoint) or a .npy array of (n, H, W) slices in [-1, 1]",
    )
    parser.add_argument("--mode", choices=MODES, default="segment")
    parser.add_argument("--out", type=Path, required=True, help="output directory")
    parser.add_argument("--split", choices=("train", "test", "all"), default=None, help="manifest split (eval.split)")
    parser.add_argument("--threshold", type=float, default=None, help="eval.threshold")
    parser.add_argument("--limit", type=int, default=None, help="process at most this many slices")
    parser.add_argument("--device", choices=DEVICES, default=None, help="train.device of the checkpoint by default")
    parser.add_argument("--seed", type=int, default=None, help="seed of the prior draws in sample mode")
    parser.set_defaults(handler=cmd_infer)


def slices_from_array(path: Path) -> List[ImageSlice]:
    try:
        array = np.load(path)
    except (OSError, ValueError) as e:
        raise DataError(f"Cannot read {path}: {e}") from e
    if array.ndim == 3:
        array = array[None]
    if array.ndim != 4:
        raise DataError(f"{path} holds shape {array.shape}, expected (n, H, W) or (B, n, H, W)")
    return [
        ImageSlice(data=np.clip(a, -1.0, 1.0), patient_id=path.stem, slice_index=k, domain=Domain.B_PATHOLOGICAL)
        for k, a in enumerate(array)
    ]


def input_slices(path: Path, config: RunConfig, split: str, domain: Domain) -> List[ImageSlice]:
    """Slices of one domain from a manifest, or every slice of a .npy array"""
    if path is not None and path.suffix == ".npy":
        return slices_from_array(path)
    manifest = path or (Path(config.data.manifest) if config.data.manifest else None)
    if manifest is None:
        raise DataError("No input given and the checkpoint configuration has no data.manifest")
    return [s for s in load_slices(manifest, config.data, split) if s.domain == domain]


def _save_png(array: np.ndarray, path: Path) -> None:
    Image.fromarray(array).save(path, format="PNG")


def _write_products(
    out_dir: Path,
    s: ImageSlice,
    images: Dict[str, np.ndarray],
    probabilities: Dict[str, np.ndarray],
    sidecar: Dict,
) -> None:
    name = f"{s.patient_id}_{s.slice_index:03d}"
    for key, array in images.items():
        for k, channel in enumerate(array):
            _save_png(image_cell(channel), out_dir / f"{name}_{key}_c{k}.png")
    for key, array in probabilities.items():
        _save_png(probability_cell(array), out_dir / f"{name}_{key}.png")
    arrays = {**images, **probabilities}
    np.savez(out_dir / f"{name}.npz", **arrays)
    sidecar = {
        **sidecar,
        "patient_id": s.patient_id,
        "slice_index": s.slice_index,
        "arrays": {key: list(array.shape) for key, array in arrays.items()},
    }
    (out_dir / f"{name}.json").write_text(json.dumps(sidecar, indent=2) + "\n")


def cmd_infer(args: argparse.Namespace) -> int:
    model, config, _ = load_model(args.checkpoint, args.device)
    device = next(model.parameters()).device
    threshold = resolve_threshold(args.threshold, config)
    split = args.split or config.eval.split
    domain = Domain.A_HEALTHY if args.mode == "sample" else Domain.B_PATHOLOGICAL
    slices = input_slices(args.input, config, split, domain)[: args.limit]
    args.out.mkdir(parents=True, exist_ok=True)

    sidecar = {
        "mode": args.mode,
        "checkpoint": str(args.checkpoint),
        "checkpoint_sha256": checkpoint_digest(args.checkpoint),
        "threshold": threshold,
        "seed": args.seed,
    }
    generator = make_generator(args.seed if args.seed is not None else config.train.seed, device)
    batch_size = config.eval.batch_size
    for start in range(0, len(slices), batch_size):
        batch = slices[start:start + batch_size]
        x = stack_slices(batch)
        if args.mode == "segment":
            probability, mask = segment(model, x, threshold)
            for k, s in enumerate(batch):
                _write_products(args.out, s, {}, {"prob": probability[k], "mask": mask[k].astype(np.float64)}, sidecar)
        elif args.mode == "inpaint":
            result = inpaint_healthy(model, x)
            for k, s in enumerate(batch):
                _write_products(
                    args.out,
                    s,
                    {"inpaint": result.inpaintings[k].cpu().numpy(), "healthy": result.output[k].cpu().numpy()},
                    {"prob": result.labelmap[k, 0].cpu().numpy()},
                    sidecar,
                )
        else:
            result = sample_pathology(model, x, generator)
            for k, s in enumerate(batch):
                _write_products(
                    args.out,
                    s,
                    {"sample": result.output[k].cpu().numpy()},
                    {"label": result.labelmap[k, 0].cpu().numpy()},
                    sidecar,
                )
    logger.info("Wrote %s products for %d slice(s) to %s", args.mode, len(slices), args.out)
    return 0
