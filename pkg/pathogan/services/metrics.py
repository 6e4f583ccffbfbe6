"""
Segmentation scores: Dice, HD95, AVD and per-patient stacked Dice.

Distances are Euclidean, in pixels, between boundary pixels. A mask pixel is
on the boundary when one of its 4-neighbours (or the image border) is background.
"""
import logging
import math
from typing import Dict, Iterable, List, Sequence, Tuple

import numpy as np
from scipy.ndimage import binary_erosion, distance_transform_edt, generate_binary_structure

from pathogan.schemas.evaluation import Aggregate, SliceMetrics

logger = logging.getLogger(__name__)

_CROSS = generate_binary_structure(2, 1)

MaskPair = Tuple[np.ndarray, np.ndarray]


def dice(a: np.ndarray, b: np.ndarray) -> float:
    """Percent overlap; 100 when both masks are empty"""
    a, b = np.asarray(a, dtype=bool), np.asarray(b, dtype=bool)
    size = int(a.sum()) + int(b.sum())
    if size == 0:
        return 100.0
    return 100.0 * 2.0 * int(np.logical_and(a, b).sum()) / size


def boundary(mask: np.ndarray) -> np.ndarray:
    mask = np.asarray(mask, dtype=bool)
    return mask & ~binary_erosion(mask, structure=_CROSS, border_value=0)


def directed_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Distance from every boundary pixel of a to the nearest boundary pixel of b"""
    to_b = distance_transform_edt(~boundary(b))
    return to_b[boundary(a)]


def diagonal(shape: Sequence[int]) -> float:
    return math.hypot(*shape)


def _distances(a: np.ndarray, b: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    return directed_distances(a, b), directed_distances(b, a)


def _empty_case(a: np.ndarray, b: np.ndarray):
    """0 for two empty masks, the image diagonal when exactly one is empty, None otherwise"""
    empty_a, empty_b = not np.any(a), not np.any(b)
    if empty_a and empty_b:
        return 0.0
    if empty_a or empty_b:
        return diagonal(np.shape(a))
    return None


def hd95(a: np.ndarray, b: np.ndarray) -> float:
    penalty = _empty_case(a, b)
    if penalty is not None:
        return penalty
    pooled = np.concatenate(_distances(a, b))
    return float(np.percentile(pooled, 95, method="linear"))


def avd(a: np.ndarray, b: np.ndarray) -> float:
    penalty = _empty_case(a, b)
    if penalty is not None:
        return penalty
    forward, backward = _distances(a, b)
    return float(0.5 * (forward.mean() + backward.mean()))


def slice_metrics(prediction: np.ndarray, gold: np.ndarray, patient_id: str, slice_index: int) -> SliceMetrics:
    prediction, gold = np.asarray(prediction, dtype=bool), np.asarray(gold, dtype=bool)
    return SliceMetrics(
        patient_id=patient_id,
        slice_index=slice_index,
        dice=dice(prediction, gold),
        hd95=hd95(prediction, gold),
        avd=avd(prediction, gold),
        penalized=bool(np.any(prediction)) != bool(np.any(gold)),
    )


def dice_per_patient(groups: Dict[str, List[MaskPair]]) -> Dict[str, float]:
    """Dice of each patient's slices stacked into one pseudo-volume"""
    scores = {}
    for patient_id, pairs in groups.items():
        overlap = size = 0
        for prediction, gold in pairs:
            prediction, gold = np.asarray(prediction, dtype=bool), np.asarray(gold, dtype=bool)
            overlap += int(np.logical_and(prediction, gold).sum())
            size += int(prediction.sum()) + int(gold.sum())
        if size == 0:
            logger.warning("Patient %s has empty prediction and gold masks; excluded from Dice PP", patient_id)
            continue
        scores[patient_id] = 100.0 * 2.0 * overlap / size
    return scores


def aggregate(values: Iterable[float]) -> Aggregate:
    """mean, population std and median"""
    array = np.asarray(list(values), dtype=np.float64)
    if array.size == 0:
        return Aggregate(mean=float("nan"), std=float("nan"), median=float("nan"))
    return Aggregate(mean=float(array.mean()), std=float(array.std()), median=float(np.median(array)))
