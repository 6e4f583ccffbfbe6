import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Literal, Optional, Tuple

import numpy as np
import torch
from torch.utils.data import DataLoader, Dataset

from pathogan.config import DataSettings
from pathogan.models.domain import Domain, ImageSlice
from pathogan.schemas.data import AugmentationConfig, DatasetManifest, DomainCounts
from pathogan.services.augment import augment
from pathogan.services.volumes import (
    InsufficientSlices,
    load_manifest,
    load_volume,
    normalize_volume,
    select_and_label_slices,
)

logger = logging.getLogger(__name__)

Split = Literal["train", "test", "all"]


def collect_slices(
    manifest: DatasetManifest,
    root: Path,
    lo: int,
    hi: int,
    pathology_threshold: int,
    split: Split = "all",
) -> List[ImageSlice]:
    """Normalized, labeled slices of every record in the split"""
    slices: List[ImageSlice] = []
    for entry in manifest.records:
        if split != "all" and entry.split != split:
            continue
        volume = normalize_volume(load_volume(entry, root))
        slices.extend(select_and_label_slices(volume, lo, hi, pathology_threshold))
    healthy = sum(1 for s in slices if s.domain == Domain.A_HEALTHY)
    logger.info("Collected %d healthy and %d pathological slice(s) (split=%s)", healthy, len(slices) - healthy, split)
    return slices


def load_slices(manifest_path: Path, data_settings: DataSettings, split: Optional[Split] = None) -> List[ImageSlice]:
    manifest, root = load_manifest(manifest_path)
    return collect_slices(
        manifest,
        root,
        data_settings.slice_lo,
        data_settings.slice_hi,
        data_settings.pathology_threshold,
        split or data_settings.split,
    )


@dataclass
class TrainingSet:
    healthy: List[ImageSlice]
    pathological: List[ImageSlice]


def _subsample(slices: List[ImageSlice], count: int, name: str, rng: np.random.Generator) -> List[ImageSlice]:
    if count > len(slices):
        raise InsufficientSlices(f"Requested {count} {name} slice(s), only {len(slices)} available")
    chosen = rng.choice(len(slices), size=count, replace=False)
    return [slices[int(k)] for k in chosen]


def build_training_set(slices: List[ImageSlice], counts: DomainCounts, seed: int) -> TrainingSet:
    """Uniform subsample without replacement of each domain"""
    rng = np.random.default_rng(seed)
    healthy = [s for s in slices if s.domain == Domain.A_HEALTHY]
    pathological = [s for s in slices if s.domain == Domain.B_PATHOLOGICAL]
    return TrainingSet(
        healthy=_subsample(healthy, counts.healthy, "healthy", rng),
        pathological=_subsample(pathological, counts.pathological, "pathological", rng),
    )


class EpochPairs(Dataset):
    """
    One epoch is a pass over the pathological slices; healthy slices are drawn
    cyclically. Both orders are fresh permutations per epoch and every item's
    augmentation has its own generator, so batches depend only on (seed, epoch, index).
    """

    def __init__(
        self,
        training_set: TrainingSet,
        augmentation: AugmentationConfig,
        seed: int,
        dtype: torch.dtype = torch.float32,
    ):
        if not training_set.healthy or not training_set.pathological:
            raise InsufficientSlices("Training needs at least one healthy and one pathological slice")
        self.healthy = training_set.healthy
        self.pathological = training_set.pathological
        self.augmentation = augmentation
        self.seed = seed
        self.dtype = dtype
        self.set_epoch(0)

    def set_epoch(self, epoch: int) -> None:
        rng = np.random.default_rng([self.seed, epoch])
        self.epoch = epoch
        self.order_B = rng.permutation(len(self.pathological))
        self.order_A = rng.permutation(len(self.healthy))

    def __len__(self) -> int:
        return len(self.pathological)

    def _prepare(self, s: ImageSlice, index: int, side: int) -> torch.Tensor:
        rng = np.random.default_rng([self.seed, self.epoch, index, side])
        data = augment(s, self.augmentation, rng).data
        return torch.from_numpy(np.ascontiguousarray(data)).to(self.dtype)

    def __getitem__(self, index: int) -> Tuple[torch.Tensor, torch.Tensor]:
        healthy = self.healthy[self.order_A[index % len(self.healthy)]]
        pathological = self.pathological[self.order_B[index]]
        return self._prepare(healthy, index, 0), self._prepare(pathological, index, 1)


def make_loader(pairs: EpochPairs, batch_size: int, workers: int = 0) -> DataLoader:
    # order comes from the dataset's own permutations
    return DataLoader(pairs, batch_size=batch_size, shuffle=False, num_workers=workers)


def stack_slices(slices: List[ImageSlice], dtype: torch.dtype = torch.float32) -> torch.Tensor:
    return torch.from_numpy(np.stack([np.ascontiguousarray(s.data) for s in slices])).to(dtype)
