from typing import Literal
from pydantic import BaseModel, ConfigDict, Field, NonNegativeFloat, PositiveFloat


class LossWeights(BaseModel):
    model_config = ConfigDict(extra="forbid")

    lambda_gan: NonNegativeFloat = 1.0  # 0 masks both adversarial generator terms
    lambda_cc: NonNegativeFloat = 5.0
    lambda_vae: NonNegativeFloat = 1.0
    lambda_idt: NonNegativeFloat = 1.0
    lambda_r: NonNegativeFloat = 0.5
    lambda_kl: NonNegativeFloat = 0.1
    omega_guard: PositiveFloat = 1.0
    label_clamp: PositiveFloat = Field(default=1e-6, lt=1.0)
    # delta fed to G_A for the identity pass
    identity_delta: Literal["prior", "zero"] = "prior"


class LossReport(BaseModel):
    """Scalar loss terms of one training iteration, summed over both directions"""
    gan_g: float = 0.0
    gan_d: float = 0.0
    cc: float = 0.0
    kl: float = 0.0  # unweighted; total_g adds lambda_kl * kl
    vae_label: float = 0.0
    vae_inpaint_out: float = 0.0
    vae_inpaint_in: float = 0.0
    idt: float = 0.0
    relevancy: float = 0.0
    total_g: float = 0.0
    total_d: float = 0.0

    def generator_sum(self, weights: LossWeights) -> float:
        return (
            weights.lambda_gan * self.gan_g
            + self.cc
            + self.vae_label
            + self.vae_inpaint_out
            + self.vae_inpaint_in
            + self.idt
            + self.relevancy
            + weights.lambda_kl * self.kl
        )
