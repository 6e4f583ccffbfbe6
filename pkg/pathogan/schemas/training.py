from typing import Literal, Tuple
from pydantic import BaseModel, ConfigDict, Field, NonNegativeInt, PositiveFloat, PositiveInt


class TrainConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    epochs: PositiveInt = 119
    batch_size: PositiveInt = 4
    step_size: PositiveFloat = 2e-4
    momentum_pair: Tuple[float, float] = (0.5, 0.999)
    buffer_capacity: NonNegativeInt = 50
    seed: NonNegativeInt = 0
    checkpoint_every: PositiveInt = 1  # epochs
    device: Literal["auto", "cpu", "cuda"] = "auto"
    float64: bool = False
    run_dir: str = "runs/pathogan"
    log_every: PositiveInt = Field(default=10, description="steps between progress log lines")
