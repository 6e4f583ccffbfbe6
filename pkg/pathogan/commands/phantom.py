import argparse
import logging
from dataclasses import replace
from pathlib import Path

import numpy as np

from pathogan.config import dump_toml, load_run_config, override
from pathogan.schemas.data import DatasetManifest
from pathogan.services.phantom import SLICES_PER_PATIENT, generate_phantom_dataset
from pathogan.services.volumes import save_volume_npy, write_manifest

logger = logging.getLogger(__name__)

CONFIG_NAME = "phantom.toml"


def register(subparsers) -> None:
    parser = subparsers.add_parser("phantom", help="write a synthetic dataset with known pathology masks")
    parser.add_argument("--out", type=Path, required=True, help="output directory")
    parser.add_argument("--healthy", type=int, default=200, help="healthy training slices")
    parser.add_argument("--pathological", type=int, default=400, help="pathological training slices")
    parser.add_argument("--test", type=int, default=50, help="held-out pathological slices")
    parser.add_argument("--size", type=int, default=64, help="image width and height")
    parser.add_argument("--channels", type=int, default=1)
    parser.add_argument("--epochs", type=int, default=30, help="train.epochs written to phantom.toml")
    parser.add_argument("--seed", type=int, default=0)
    parser.set_defaults(handler=cmd_phantom)


def cmd_phantom(args: argparse.Namespace) -> int:
    manifest_path = write_phantom(
        args.out, args.healthy, args.pathological, args.test, args.size, args.channels, args.seed, args.epochs
    )
    print(manifest_path)
    return 0


def write_phantom(
    out_dir: Path,
    healthy: int,
    pathological: int,
    test: int,
    size: int,
    n_channels: int,
    seed: int,
    epochs: int = 30,
) -> Path:
    """Volumes, manifest.json and a matching phantom.toml; returns the manifest path"""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)

    train = generate_phantom_dataset(healthy, pathological, size, n_channels, rng)
    held_out = [
        replace(volume, patient_id=f"test_{index:04d}")
        for index, volume in enumerate(generate_phantom_dataset(0, test, size, n_channels, rng))
    ]
    records = [save_volume_npy(volume, out_dir, "train") for volume in train]
    records += [save_volume_npy(volume, out_dir, "test") for volume in held_out]

    manifest = DatasetManifest(
        n_channels=n_channels,
        channel_names=[f"channel_{k}" for k in range(n_channels)],
        image_size=size,
        seed=seed,
        records=records,
    )
    manifest_path = write_manifest(manifest, out_dir)

    settings = {
        "data.manifest": manifest_path.resolve().as_posix(),
        "data.split": "train",
        "data.slice_lo": 0,
        "data.slice_hi": SLICES_PER_PATIENT - 1,
        "data.counts.healthy": healthy,
        "data.counts.pathological": pathological,
        "model.n_channels": n_channels,
        "model.image_size": size,
        "train.epochs": epochs,
        "train.seed": seed,
        "eval.split": "test",
    }
    config = load_run_config(overrides=[override(key, value) for key, value in settings.items()])
    (out_dir / CONFIG_NAME).write_text(dump_toml(config))
    logger.info("Wrote %d phantom volume(s) and %s", len(records), out_dir / CONFIG_NAME)
    return manifest_path
