from typing import Dict, List
from pydantic import BaseModel, Field


class SliceMetrics(BaseModel):
    patient_id: str
    slice_index: int
    dice: float = Field(ge=0.0, le=100.0)  # percent
    hd95: float = Field(ge=0.0)  # pixels
    avd: float = Field(ge=0.0)  # pixels
    penalized: bool = False  # exactly one of prediction/gold was empty


class PatientMetrics(BaseModel):
    patient_id: str
    dice_pp: float = Field(ge=0.0, le=100.0)
    slices: int


class Aggregate(BaseModel):
    mean: float
    std: float
    median: float

    def formatted(self) -> str:
        return f"{self.mean:.1f}±{self.std:.1f}({self.median:.1f})"


class MetricsRecord(BaseModel):
    per_slice: List[SliceMetrics]
    per_patient: List[PatientMetrics]
    aggregate: Dict[str, Aggregate]  # dice, hd95, avd, dice_pp
    threshold: float
