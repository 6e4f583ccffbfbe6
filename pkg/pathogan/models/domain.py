from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np
import torch


class Domain(str, Enum):
    A_HEALTHY = "A_healthy"
    B_PATHOLOGICAL = "B_pathological"


class Mode(str, Enum):
    TRAIN = "train"
    TEST = "test"


@dataclass
class ImageSlice:
    """One (n_channels, H, W) slice in [-1, 1]"""
    data: np.ndarray
    patient_id: str
    slice_index: int
    domain: Domain
    # gold mask (H, W); only used for evaluation
    gold_mask: Optional[np.ndarray] = None

    @property
    def n_channels(self) -> int:
        return int(self.data.shape[0])

    @property
    def key(self) -> str:
        return f"{self.patient_id}:{self.slice_index}"


@dataclass
class VolumeRecord:
    patient_id: str
    channels: np.ndarray  # (n, D, H, W)
    manual_segmentation: Optional[np.ndarray] = None  # (D, H, W)

    @property
    def depth(self) -> int:
        return int(self.channels.shape[1])


@dataclass
class ResidualOutput:
    """Batched residual generator output: raw (B, n+1, H, W), labelmap (B, 1, H, W), inpaintings (B, n, H, W)"""
    raw: torch.Tensor
    labelmap: torch.Tensor
    inpaintings: torch.Tensor


@dataclass
class LatentCode:
    mean: torch.Tensor
    logvar: torch.Tensor
    sample: torch.Tensor


@dataclass
class TranslationResult:
    output: torch.Tensor
    residual: ResidualOutput
    latent_gamma: Optional[LatentCode] = None
    latent_delta: Optional[LatentCode] = None

    @property
    def labelmap(self) -> torch.Tensor:
        return self.residual.labelmap

    @property
    def inpaintings(self) -> torch.Tensor:
        return self.residual.inpaintings
