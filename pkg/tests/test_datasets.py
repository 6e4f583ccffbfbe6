import numpy as np
import pytest
import torch

from pathogan.config import DataSettings
from pathogan.models.domain import Domain
from pathogan.schemas.data import AugmentationConfig, DatasetManifest, DomainCounts
from pathogan.services.datasets import (
    EpochPairs,
    build_training_set,
    collect_slices,
    load_slices,
    make_loader,
    stack_slices,
)
from pathogan.services.phantom import generate_phantom_dataset
from pathogan.services.volumes import InsufficientSlices, load_manifest, save_volume_npy, write_manifest


@pytest.fixture
def dataset_dir(tmp_path):
    volumes = generate_phantom_dataset(6, 8, 16, 2, np.random.default_rng(0))
    entries = [save_volume_npy(v, tmp_path, split="test" if v.patient_id == "patho_0001" else "train") for v in volumes]
    write_manifest(DatasetManifest(n_channels=2, image_size=16, records=entries), tmp_path)
    return tmp_path


SETTINGS = DataSettings(slice_lo=0, slice_hi=3, pathology_threshold=0)


def test_collect_labels_every_slice(dataset_dir):
    slices = load_slices(dataset_dir, SETTINGS, split="all")
    assert sum(s.domain == Domain.A_HEALTHY for s in slices) == 6
    assert sum(s.domain == Domain.B_PATHOLOGICAL for s in slices) == 8
    for s in slices:
        assert s.data.shape == (2, 16, 16)
        assert s.data.min() >= -1.0 and s.data.max() <= 1.0
        assert s.gold_mask.shape == (16, 16)


def test_collect_filters_split(dataset_dir):
    manifest, root = load_manifest(dataset_dir)
    test = collect_slices(manifest, root, 0, 3, 0, split="test")
    assert {s.patient_id for s in test} == {"patho_0001"}
    train = load_slices(dataset_dir, SETTINGS)
    assert "patho_0001" not in {s.patient_id for s in train}
    assert len(train) == 10


def test_training_set_counts_and_seed(dataset_dir):
    slices = load_slices(dataset_dir, SETTINGS, split="all")
    counts = DomainCounts(healthy=3, pathological=5)
    first = build_training_set(slices, counts, seed=1)
    second = build_training_set(slices, counts, seed=1)
    assert len(first.healthy) == 3 and len(first.pathological) == 5
    assert [s.key for s in first.healthy] == [s.key for s in second.healthy]
    assert len({s.key for s in first.pathological}) == 5
    assert all(s.domain == Domain.B_PATHOLOGICAL for s in first.pathological)


def test_training_set_too_large(dataset_dir):
    slices = load_slices(dataset_dir, SETTINGS, split="all")
    with pytest.raises(InsufficientSlices):
        build_training_set(slices, DomainCounts(healthy=7, pathological=1), seed=0)


def _pairs(dataset_dir, augmentation=AugmentationConfig(enabled=False)):
    slices = load_slices(dataset_dir, SETTINGS, split="all")
    training_set = build_training_set(slices, DomainCounts(healthy=2, pathological=5), seed=0)
    return EpochPairs(training_set, augmentation, seed=0, dtype=torch.float64)


def test_epoch_covers_pathological_slices_once(dataset_dir):
    pairs = _pairs(dataset_dir)
    assert len(pairs) == 5
    seen = {int(k) for k in pairs.order_B}
    assert seen == set(range(5))
    healthy, pathological = pairs[4]
    assert healthy.shape == (2, 16, 16)
    assert pathological.dtype == torch.float64


def test_items_depend_on_seed_epoch_and_index(dataset_dir):
    augmentation = AugmentationConfig(deform_grid_spacing=8)
    pairs = _pairs(dataset_dir, augmentation)
    pairs.set_epoch(3)
    first = [pairs[k] for k in range(len(pairs))]
    other = _pairs(dataset_dir, augmentation)
    other.set_epoch(3)
    for (a_A, a_B), (b_A, b_B) in zip(first, (other[k] for k in range(len(other)))):
        assert torch.equal(a_A, b_A)
        assert torch.equal(a_B, b_B)


def test_empty_domain_rejected(dataset_dir):
    slices = load_slices(dataset_dir, SETTINGS, split="all")
    training_set = build_training_set(slices, DomainCounts(healthy=0, pathological=2), seed=0)
    with pytest.raises(InsufficientSlices):
        EpochPairs(training_set, AugmentationConfig(enabled=False), seed=0)


def test_loader_batches(dataset_dir):
    batches = list(make_loader(_pairs(dataset_dir), batch_size=2))
    assert [batch[1].shape[0] for batch in batches] == [2, 2, 1]
    assert batches[0][0].shape == (2, 2, 16, 16)


def test_stack_slices(dataset_dir):
    slices = load_slices(dataset_dir, SETTINGS, split="all")[:3]
    stacked = stack_slices(slices)
    assert stacked.shape == (3, 2, 16, 16)
    assert stacked.dtype == torch.float32
