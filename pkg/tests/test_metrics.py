import math

import numpy as np
import pytest

from pathogan.services.metrics import (
    aggregate,
    avd,
    boundary,
    dice,
    dice_per_patient,
    diagonal,
    hd95,
    slice_metrics,
)


def _square(shape, top, left, size):
    mask = np.zeros(shape, dtype=bool)
    mask[top:top + size, left:left + size] = True
    return mask


def _brute_boundary(mask):
    points = []
    height, width = mask.shape
    for y in range(height):
        for x in range(width):
            if not mask[y, x]:
                continue
            neighbours = [(y - 1, x), (y + 1, x), (y, x - 1), (y, x + 1)]
            if any(not (0 <= ny < height and 0 <= nx < width) or not mask[ny, nx] for ny, nx in neighbours):
                points.append((y, x))
    return np.array(points, dtype=np.float64)


def _brute_directed(a, b):
    pa, pb = _brute_boundary(a), _brute_boundary(b)
    return np.sqrt(((pa[:, None, :] - pb[None, :, :]) ** 2).sum(axis=2)).min(axis=1)


def test_dice_cases():
    a = _square((10, 10), 2, 2, 4)
    assert dice(a, a) == 100.0
    assert dice(a, _square((10, 10), 6, 6, 2)) == 0.0
    assert dice(np.zeros((4, 4)), np.zeros((4, 4))) == 100.0
    b = _square((10, 10), 2, 4, 4)  # 8 of 16 pixels shared
    assert dice(a, b) == pytest.approx(50.0)


def test_boundary_ring_and_border():
    ring = boundary(_square((7, 7), 1, 1, 5))
    assert ring.sum() == 16
    assert not ring[3, 3]
    full = boundary(np.ones((4, 4), dtype=bool))
    assert full.sum() == 12


def _brute_dice(a, b):
    overlap = size = 0
    for x, y in zip(a.ravel(), b.ravel()):
        overlap += int(x and y)
        size += int(x) + int(y)
    return 100.0 if size == 0 else 100.0 * 2 * overlap / size


def _brute_distances(a, b):
    """(hd95, avd) by exhaustive search, with the empty-mask penalties"""
    if not a.any() and not b.any():
        return 0.0, 0.0
    if not a.any() or not b.any():
        return (math.hypot(*a.shape),) * 2
    forward, backward = _brute_directed(a, b), _brute_directed(b, a)
    pooled = np.concatenate([forward, backward])
    return np.percentile(pooled, 95), 0.5 * (forward.mean() + backward.mean())


def test_metrics_match_brute_force_on_random_masks():
    rng = np.random.default_rng(0)
    for _ in range(500):
        shape = tuple(rng.integers(1, 9, size=2))
        density = rng.uniform(0.0, 0.8)
        a, b = rng.random(shape) < density, rng.random(shape) < density
        expected_hd95, expected_avd = _brute_distances(a, b)
        assert dice(a, b) == pytest.approx(_brute_dice(a, b))
        assert hd95(a, b) == pytest.approx(expected_hd95)
        assert avd(a, b) == pytest.approx(expected_avd)


def test_shifted_squares():
    a = _square((20, 20), 5, 5, 6)
    b = _square((20, 20), 5, 8, 6)
    assert hd95(a, a) == 0.0
    assert avd(a, a) == 0.0
    assert hd95(a, b) == pytest.approx(np.percentile(np.concatenate([_brute_directed(a, b), _brute_directed(b, a)]), 95))
    assert 0 < avd(a, b) <= 3.0


def test_empty_mask_penalties():
    empty, mask = np.zeros((30, 40), dtype=bool), _square((30, 40), 3, 3, 5)
    assert diagonal((30, 40)) == 50.0
    assert hd95(empty, empty) == 0.0
    assert avd(empty, empty) == 0.0
    assert hd95(empty, mask) == 50.0
    assert avd(mask, empty) == 50.0


def test_slice_metrics_flags_penalty():
    mask = _square((8, 8), 2, 2, 3)
    scored = slice_metrics(np.zeros((8, 8)), mask, "p1", 61)
    assert scored.penalized
    assert scored.dice == 0.0
    assert scored.hd95 == pytest.approx(math.hypot(8, 8))
    assert not slice_metrics(mask, mask, "p1", 62).penalized
    assert not slice_metrics(np.zeros((8, 8)), np.zeros((8, 8)), "p1", 63).penalized


def test_dice_per_patient_pools_slices():
    a = _square((6, 6), 0, 0, 2)  # 4 pixels
    empty = np.zeros((6, 6), dtype=bool)
    groups = {
        "p1": [(a, a), (empty, a)],  # 2 * 4 / (4 + 8)
        "p2": [(empty, empty)],
    }
    scores = dice_per_patient(groups)
    assert scores == {"p1": pytest.approx(100.0 * 8 / 12)}


def test_aggregate():
    summary = aggregate([1.0, 2.0, 3.0, 4.0])
    assert summary.mean == 2.5
    assert summary.std == pytest.approx(math.sqrt(1.25))
    assert summary.median == 2.5
    assert summary.formatted() == "2.5±1.1(2.5)"
    assert math.isnan(aggregate([]).mean)


def test_dice_per_patient_matches_stacked_volumes():
    rng = np.random.default_rng(1)
    for _ in range(50):
        groups = {}
        for patient in range(rng.integers(1, 5)):
            groups[f"p{patient}"] = [
                (rng.random((6, 6)) < rng.uniform(0, 0.5), rng.random((6, 6)) < rng.uniform(0, 0.5))
                for _ in range(rng.integers(1, 6))
            ]
        expected = {}
        for patient_id, pairs in groups.items():
            predictions = np.stack([prediction for prediction, _ in pairs])
            golds = np.stack([gold for _, gold in pairs])
            if predictions.any() or golds.any():
                expected[patient_id] = dice(predictions, golds)
        scores = dice_per_patient(groups)
        assert scores.keys() == expected.keys()
        for patient_id, score in scores.items():
            assert score == pytest.approx(expected[patient_id])
