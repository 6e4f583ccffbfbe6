"""
Synthetic ellipse-plus-blob volumes with known pathology masks.
"""
import logging
from typing import List, Tuple

import numpy as np
from scipy.ndimage import gaussian_filter

from pathogan.models.domain import VolumeRecord

logger = logging.getLogger(__name__)

# FLAIR-bright, T1CE-dark, T1-dark, T2-bright; cycled for more channels
CONTRAST_SIGNS = (1.0, -1.0, -1.0, 1.0)
BLOB_AMPLITUDE = 0.5
SLICES_PER_PATIENT = 4


def _grid(size: int) -> Tuple[np.ndarray, np.ndarray]:
    return np.meshgrid(np.arange(size, dtype=np.float64), np.arange(size, dtype=np.float64), indexing="ij")


def _anatomy(size: int, rng: np.random.Generator) -> Tuple[np.ndarray, Tuple[float, float]]:
    ys, xs = _grid(size)
    center = (size / 2.0 + rng.uniform(-0.03, 0.03) * size, size / 2.0 + rng.uniform(-0.03, 0.03) * size)
    semi = rng.uniform(0.30, 0.42, size=2) * size
    inside = ((ys - center[0]) / semi[0]) ** 2 + ((xs - center[1]) / semi[1]) ** 2 <= 1.0
    return inside, center


def _texture(inside: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    smooth = gaussian_filter(rng.normal(size=inside.shape), sigma=inside.shape[0] / 16.0)
    smooth = smooth / (np.abs(smooth).max() + 1e-12)
    return np.where(inside, 1.0 + 0.25 * smooth, 0.0)


def _blobs(inside: np.ndarray, center: Tuple[float, float], rng: np.random.Generator) -> np.ndarray:
    size = inside.shape[0]
    ys, xs = _grid(size)
    mask = np.zeros(inside.shape, dtype=bool)
    for _ in range(int(rng.integers(1, 3))):
        radius = rng.uniform(0.07, 0.14) * size
        cy = center[0] + rng.uniform(-0.15, 0.15) * size
        cx = center[1] + rng.uniform(-0.15, 0.15) * size
        mask |= (ys - cy) ** 2 + (xs - cx) ** 2 <= radius ** 2
    return mask & inside


def _phantom_slice(
    size: int,
    n_channels: int,
    pathological: bool,
    rng: np.random.Generator,
) -> Tuple[np.ndarray, np.ndarray]:
    inside, center = _anatomy(size, rng)
    channels = np.stack([_texture(inside, rng) for _ in range(n_channels)])
    mask = _blobs(inside, center, rng) if pathological else np.zeros(inside.shape, dtype=bool)
    for k in range(n_channels):
        sign = CONTRAST_SIGNS[k % len(CONTRAST_SIGNS)]
        # stays positive inside the anatomy so the nonzero set is the anatomy
        channels[k][mask] = channels[k][mask] * (1.0 + sign * BLOB_AMPLITUDE)
    return channels, mask


def _volume(
    patient_id: str,
    depth: int,
    size: int,
    n_channels: int,
    pathological: bool,
    rng: np.random.Generator,
) -> VolumeRecord:
    slices = [_phantom_slice(size, n_channels, pathological, rng) for _ in range(depth)]
    return VolumeRecord(
        patient_id=patient_id,
        channels=np.stack([channels for channels, _ in slices], axis=1),
        manual_segmentation=np.stack([mask for _, mask in slices]).astype(np.int16),
    )


def _depths(count: int, per_patient: int) -> List[int]:
    full, rest = divmod(count, per_patient)
    return [per_patient] * full + ([rest] if rest else [])


def generate_phantom_dataset(
    count_A: int,
    count_B: int,
    size: int,
    n_channels: int,
    rng: np.random.Generator,
    slices_per_patient: int = SLICES_PER_PATIENT,
) -> List[VolumeRecord]:
    """Healthy volumes first (empty masks), then pathological ones; every slice counts once"""
    volumes = []
    for prefix, count, pathological in (("healthy", count_A, False), ("patho", count_B, True)):
        for index, depth in enumerate(_depths(count, slices_per_patient)):
            volumes.append(_volume(f"{prefix}_{index:04d}", depth, size, n_channels, pathological, rng))
    logger.info(
        "Generated %d phantom volume(s): %d healthy and %d pathological slice(s) at %dx%d",
        len(volumes), count_A, count_B, size, size,
    )
    return volumes
