import csv
import json

import numpy as np
import pytest
import torch

from pathogan.models.domain import Domain, ImageSlice
from pathogan.services.evaluation import (
    CSV_NAME,
    JSON_NAME,
    REFERENCE_SCORES,
    evaluate_dataset,
    evaluate_predictions,
    format_table,
    inpaint_healthy,
    sample_pathology,
    segment,
    write_report,
)


def _slice(patient_id, index, domain, gold=None, seed=0):
    data = np.random.default_rng(seed).uniform(-1, 1, size=(2, 8, 8))
    return ImageSlice(data=data, patient_id=patient_id, slice_index=index, domain=domain, gold_mask=gold)


def _gold(top, left, size=3):
    mask = np.zeros((8, 8), dtype=bool)
    mask[top:top + size, left:left + size] = True
    return mask


@pytest.fixture
def slices():
    return [
        _slice("p1", 60, Domain.B_PATHOLOGICAL, _gold(1, 1), 0),
        _slice("p1", 61, Domain.B_PATHOLOGICAL, _gold(2, 2), 1),
        _slice("p2", 60, Domain.B_PATHOLOGICAL, _gold(4, 4), 2),
        _slice("p2", 61, Domain.A_HEALTHY, np.zeros((8, 8), dtype=bool), 3),
    ]


def test_perfect_predictions(slices):
    pathological = slices[:3]
    probabilities = np.stack([s.gold_mask.astype(np.float64) for s in pathological])
    record = evaluate_predictions(pathological, probabilities, 0.5)
    assert [m.dice for m in record.per_slice] == [100.0, 100.0, 100.0]
    assert record.aggregate["hd95"].mean == 0.0
    assert {p.patient_id: p.slices for p in record.per_patient} == {"p1": 2, "p2": 1}
    assert record.aggregate["dice_pp"].mean == 100.0


def test_threshold_is_strict(slices):
    probabilities = np.full((1, 8, 8), 0.5)
    record = evaluate_predictions(slices[:1], probabilities, 0.5)
    assert record.per_slice[0].penalized
    assert record.per_slice[0].dice == 0.0


def test_segment(model, images):
    probability, mask = segment(model, images, threshold=0.5)
    assert probability.shape == (2, 8, 8)
    assert mask.dtype == bool
    assert np.array_equal(mask, probability > 0.5)
    again, _ = segment(model, images)
    assert np.array_equal(probability, again)
    assert np.all((probability >= 0) & (probability <= 1))


def test_inpaint_and_sample(model, images):
    healthy = inpaint_healthy(model, images)
    assert healthy.inpaintings.shape == images.shape
    first = sample_pathology(model, images, torch.Generator().manual_seed(0))
    second = sample_pathology(model, images, torch.Generator().manual_seed(0))
    other = sample_pathology(model, images, torch.Generator().manual_seed(1))
    assert torch.equal(first.output, second.output)
    assert not torch.equal(first.latent_delta.sample, other.latent_delta.sample)


def test_evaluate_dataset_scores_pathological_slices(model, slices):
    record = evaluate_dataset(model, slices, threshold=0.5, batch_size=2)
    assert [(m.patient_id, m.slice_index) for m in record.per_slice] == [("p1", 60), ("p1", 61), ("p2", 60)]
    assert set(record.aggregate) == {"dice", "hd95", "avd", "dice_pp"}


def test_format_table(slices):
    pathological = slices[:3]
    record = evaluate_predictions(pathological, np.stack([s.gold_mask for s in pathological]).astype(float), 0.5)
    table = format_table(record)
    lines = table.splitlines()
    assert len(lines) == 3
    assert "Dice PP" in lines[0]
    assert "100.0±0.0(100.0)" in lines[1]
    assert REFERENCE_SCORES["test"]["hd95"] in lines[2]
    assert len(format_table(record, reference=None).splitlines()) == 2


def test_write_report(tmp_path, slices):
    pathological = slices[:3]
    record = evaluate_predictions(pathological, np.zeros((3, 8, 8)), 0.5)
    csv_path, json_path = write_report(record, tmp_path / "eval", {"seed": 0}, "abc123", "test")
    assert csv_path.name == CSV_NAME and json_path.name == JSON_NAME

    with open(csv_path, newline="") as handle:
        rows = list(csv.DictReader(handle))
    assert len(rows) == 3
    assert set(rows[0]) == {"patient_id", "slice_index", "dice", "hd95", "avd", "penalized"}
    assert rows[0]["penalized"] == "True"

    report = json.loads(json_path.read_text())
    assert report["checkpoint_sha256"] == "abc123"
    assert report["slices"] == 3
    assert report["aggregate"]["hd95"]["mean"] == pytest.approx(np.hypot(8, 8))
    assert report["reference"]["scores"] == REFERENCE_SCORES["test"]
    assert [p["dice_pp"] for p in report["per_patient"]] == [0.0, 0.0]
