"""
Volume ingestion: manifests, npy/NIfTI loading, normalization and slice labeling.
"""
import json
import logging
import math
from pathlib import Path
from typing import List, Optional, Tuple

import nibabel as nib
import numpy as np
from nibabel.filebasedimages import ImageFileError
from pydantic import ValidationError

from pathogan.errors import PathoGANError
from pathogan.models.domain import Domain, ImageSlice, VolumeRecord
from pathogan.schemas.data import DatasetManifest, VolumeEntry

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
TARGET_STD = math.sqrt(1.0 / 3.0)


class DataError(PathoGANError):
    """Custom exception for dataset and volume errors"""
    pass


class EmptyChannel(DataError):
    pass


class DegenerateChannel(DataError):
    pass


class MissingSegmentation(DataError):
    pass


class InsufficientSlices(DataError):
    pass


class SliceRangeError(DataError):
    pass


class ManifestError(DataError):
    pass


def load_manifest(path: Path) -> Tuple[DatasetManifest, Path]:
    """Manifest plus the directory its relative paths are resolved against"""
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    try:
        manifest = DatasetManifest.model_validate_json(path.read_text())
    except OSError as e:
        raise ManifestError(f"Cannot read manifest {path}: {e}") from e
    except ValidationError as e:
        raise ManifestError(f"Invalid manifest {path}:\n{e}") from e
    for entry in manifest.records:
        if len(entry.channels) != manifest.n_channels:
            raise ManifestError(
                f"Record {entry.patient_id} lists {len(entry.channels)} channel file(s), "
                f"manifest declares {manifest.n_channels}"
            )
    return manifest, path.parent


def write_manifest(manifest: DatasetManifest, directory: Path) -> Path:
    path = Path(directory) / MANIFEST_NAME
    path.write_text(json.dumps(manifest.model_dump(mode="json"), indent=2) + "\n")
    return path


def _read_array(path: Path, fmt: str) -> np.ndarray:
    try:
        if fmt == "nifti":
            # NIfTI volumes are stored (H, W, D); slices run along the last axis
            return np.transpose(np.asarray(nib.load(str(path)).get_fdata()), (2, 0, 1))
        return np.load(path)
    except ImageFileError as e:
        raise DataError(f"Not a NIfTI file {path}: {e}") from e
    except (OSError, ValueError) as e:
        raise DataError(f"Cannot read {path}: {e}") from e


def load_volume(entry: VolumeEntry, root: Path) -> VolumeRecord:
    channels = [_read_array(Path(root) / name, entry.format) for name in entry.channels]
    shapes = {c.shape for c in channels}
    if len(shapes) != 1 or len(channels[0].shape) != 3:
        raise DataError(f"Channels of {entry.patient_id} have mismatching shapes {sorted(shapes)}")
    segmentation = None
    if entry.segmentation is not None:
        segmentation = _read_array(Path(root) / entry.segmentation, entry.format)
        if segmentation.shape != channels[0].shape:
            raise DataError(
                f"Segmentation of {entry.patient_id} has shape {segmentation.shape}, "
                f"channels have {channels[0].shape}"
            )
        segmentation = np.rint(segmentation).astype(np.int16)
    return VolumeRecord(
        patient_id=entry.patient_id,
        channels=np.stack(channels).astype(np.float64),
        manual_segmentation=segmentation,
    )


def save_volume_npy(volume: VolumeRecord, root: Path, split: str = "train") -> VolumeEntry:
    """Write one patient as <root>/<patient>/channel_k.npy (+ segmentation.npy)"""
    directory = Path(root) / volume.patient_id
    directory.mkdir(parents=True, exist_ok=True)
    names = []
    for k, channel in enumerate(volume.channels):
        name = f"{volume.patient_id}/channel_{k}.npy"
        np.save(Path(root) / name, channel)
        names.append(name)
    segmentation = None
    if volume.manual_segmentation is not None:
        segmentation = f"{volume.patient_id}/segmentation.npy"
        np.save(Path(root) / segmentation, volume.manual_segmentation)
    return VolumeEntry(
        patient_id=volume.patient_id, format="npy", channels=names, segmentation=segmentation, split=split
    )


def normalize_volume(volume: VolumeRecord, clip: bool = True) -> VolumeRecord:
    """Nonzero voxels of each channel to mean 0 and variance 1/3, then clip to [-1, 1]"""
    normalized = np.zeros(volume.channels.shape, dtype=np.float64)
    for k, channel in enumerate(volume.channels):
        nonzero = channel != 0
        if not nonzero.any():
            raise EmptyChannel(f"Channel {k} of {volume.patient_id} has no nonzero voxel")
        values = channel[nonzero].astype(np.float64)
        std = values.std()  # population
        if std == 0:
            raise DegenerateChannel(f"Channel {k} of {volume.patient_id} is constant over its nonzero voxels")
        normalized[k][nonzero] = (values - values.mean()) / std * TARGET_STD
    if clip:
        np.clip(normalized, -1.0, 1.0, out=normalized)
    return VolumeRecord(
        patient_id=volume.patient_id,
        channels=normalized,
        manual_segmentation=volume.manual_segmentation,
    )


def label_slice(tumor_pixels: int, pathology_threshold: int) -> Optional[Domain]:
    """A for no pathology, B above the threshold, None (discard) in between"""
    if tumor_pixels == 0:
        return Domain.A_HEALTHY
    if tumor_pixels > pathology_threshold:
        return Domain.B_PATHOLOGICAL
    return None


def select_and_label_slices(
    volume: VolumeRecord,
    lo: int,
    hi: int,
    pathology_threshold: int,
) -> List[ImageSlice]:
    """Transverse slices lo..hi (inclusive, hi clamped to the volume) labeled by their segmentation"""
    if volume.manual_segmentation is None:
        raise MissingSegmentation(f"{volume.patient_id} has no manual segmentation to label slices with")
    if lo > hi or lo >= volume.depth:
        raise SliceRangeError(f"Slice range {lo}..{hi} is empty for {volume.patient_id} (depth {volume.depth})")
    hi = min(hi, volume.depth - 1)

    slices = []
    discarded = 0
    for index in range(lo, hi + 1):
        gold = volume.manual_segmentation[index] > 0
        domain = label_slice(int(np.count_nonzero(gold)), pathology_threshold)
        if domain is None:
            discarded += 1
            continue
        slices.append(ImageSlice(
            data=volume.channels[:, index],
            patient_id=volume.patient_id,
            slice_index=index,
            domain=domain,
            gold_mask=gold,
        ))
    if discarded:
        logger.debug("%s: discarded %d slice(s) at or below the pathology threshold", volume.patient_id, discarded)
    return slices
