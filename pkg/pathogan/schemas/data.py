from typing import List, Literal, Optional
from pydantic import BaseModel, ConfigDict, Field, NonNegativeFloat, NonNegativeInt, PositiveFloat


class AugmentationConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    enabled: bool = True
    mirror_prob: float = Field(default=0.5, ge=0.0, le=1.0)
    rotation_range: NonNegativeFloat = 0.1  # radians, angle ~ U[-range, range]
    scale_base: PositiveFloat = 1.1  # scale = scale_base ** U[-1, 1]
    deform_grid_spacing: int = Field(default=128, ge=2)  # pixels
    deform_sigma: NonNegativeFloat = 5.0  # std of each grid vector component, pixels


class DomainCounts(BaseModel):
    model_config = ConfigDict(extra="forbid")

    healthy: NonNegativeInt = 1500
    pathological: NonNegativeInt = 6000


class VolumeEntry(BaseModel):
    """One patient volume listed in a dataset manifest"""
    model_config = ConfigDict(extra="forbid")

    patient_id: str
    format: Literal["npy", "nifti"] = "npy"
    channels: List[str]  # one file per channel, relative to the manifest
    segmentation: Optional[str] = None
    split: Literal["train", "test"] = "train"


class DatasetManifest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    version: int = 1
    n_channels: int
    channel_names: List[str] = []
    image_size: Optional[int] = None
    seed: Optional[int] = None
    records: List[VolumeEntry]
