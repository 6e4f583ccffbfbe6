"""
Loss terms of the PathoGAN objective.

Every per-image term is computed per sample and averaged over the batch.
"""
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Tuple

import torch
import torch.nn.functional as F

from pathogan.models.domain import LatentCode, TranslationResult
from pathogan.schemas.losses import LossReport, LossWeights

_SPATIAL = (1, 2, 3)


def gan_loss_d(scores_real: torch.Tensor, scores_fake: torch.Tensor) -> torch.Tensor:
    """Least squares discriminator loss: real -> 1, fake -> 0"""
    return torch.mean((scores_real - 1) ** 2) + torch.mean(scores_fake ** 2)


def gan_loss_g(scores_fake: torch.Tensor) -> torch.Tensor:
    return torch.mean((scores_fake - 1) ** 2)


def cycle_loss(x: torch.Tensor, x_tilde: torch.Tensor, w: LossWeights) -> torch.Tensor:
    return w.lambda_cc * torch.mean(torch.abs(x_tilde - x))


def kl_divergence(code: LatentCode) -> torch.Tensor:
    """KL(q || N(0, I)) summed over the code, averaged over the batch"""
    per_sample = 0.5 * torch.sum(code.mean ** 2 + torch.exp(code.logvar) - 1 - code.logvar, dim=1)
    return per_sample.mean()


def kl_loss(gamma: LatentCode, delta: LatentCode) -> torch.Tensor:
    return kl_divergence(gamma) + kl_divergence(delta)


@dataclass
class VAEConstants:
    """Region-size normalizers, (B,) each; never differentiated"""
    omega_outside: torch.Tensor
    omega_inside: torch.Tensor


def vae_constants(hat_X: TranslationResult, tilde_Y: TranslationResult, w: LossWeights) -> VAEConstants:
    n_pixels = hat_X.labelmap.shape[2] * hat_X.labelmap.shape[3]
    outside = torch.sum(1 - hat_X.labelmap, dim=_SPATIAL)
    inside = torch.sum(tilde_Y.labelmap, dim=_SPATIAL)
    return VAEConstants(
        omega_outside=((outside + w.omega_guard) / n_pixels).detach(),
        omega_inside=((inside + w.omega_guard) / n_pixels).detach(),
    )


def vae_loss(
    x_X: torch.Tensor,
    x_Y: torch.Tensor,
    hat_X: TranslationResult,
    hat_Y: TranslationResult,
    tilde_Y: TranslationResult,
    w: LossWeights,
    *,
    constants: Optional[VAEConstants] = None,
) -> Tuple[torch.Tensor, Dict[str, torch.Tensor]]:
    """
    Labelmap BCE plus the two omega-weighted inpainting reconstruction terms.

    hat_X is the first leg of the cycle starting at x_X; hat_Y and tilde_Y are
    both legs of the cycle starting at x_Y. The BCE target hat_Y.labelmap and
    the omegas are constants of the gradient.
    """
    if constants is None:
        constants = vae_constants(hat_X, tilde_Y, w)
    n_pixels = x_X.shape[2] * x_X.shape[3]
    scale = w.lambda_vae / n_pixels

    l_tilde = tilde_Y.labelmap
    label = F.binary_cross_entropy(l_tilde, hat_Y.labelmap.detach(), reduction="none").sum(dim=_SPATIAL)

    outside = torch.sum(((1 - hat_X.labelmap) * (hat_X.inpaintings - x_X)) ** 2, dim=_SPATIAL)
    outside = outside / constants.omega_outside.detach()

    inside = torch.sum((l_tilde * (tilde_Y.inpaintings - x_Y)) ** 2, dim=_SPATIAL)
    inside = inside / constants.omega_inside.detach()

    components = {
        "vae_label": scale * label.mean(),
        "vae_inpaint_out": scale * outside.mean(),
        "vae_inpaint_in": scale * inside.mean(),
    }
    total = components["vae_label"] + components["vae_inpaint_out"] + components["vae_inpaint_in"]
    return total, components


def identity_loss(
    generator: Callable[[torch.Tensor], TranslationResult],
    x_Y: torch.Tensor,
    w: LossWeights,
) -> torch.Tensor:
    """A generator fed its own target domain should label nothing"""
    labelmap = generator(x_Y).labelmap
    return w.lambda_idt * torch.mean(torch.abs(labelmap))


def relevancy_loss(x: torch.Tensor, result: TranslationResult, w: LossWeights) -> torch.Tensor:
    """Area penalty minus the labelled share of |x - p|; (x - p) is a constant of the gradient"""
    labelmap = torch.clamp(result.labelmap, 0.0, 1.0 - w.label_clamp)
    area = torch.mean(-torch.log(1 - labelmap ** 2), dim=_SPATIAL)

    difference = (x - result.inpaintings).detach()
    covered = torch.sum(torch.abs(labelmap * difference), dim=_SPATIAL)
    # labelmap counted once per channel
    mass = torch.sum(torch.abs(labelmap), dim=_SPATIAL) * x.shape[1]
    return w.lambda_r * torch.mean(area - covered / (mass + w.omega_guard))


@dataclass
class DirectionLosses:
    """Generator-side terms of one translation direction"""
    gan_g: torch.Tensor
    cc: torch.Tensor
    vae: Dict[str, torch.Tensor] = field(default_factory=dict)
    idt: Optional[torch.Tensor] = None
    relevancy: Optional[torch.Tensor] = None


def _value(term: Optional[torch.Tensor]) -> float:
    return 0.0 if term is None else float(term.detach())


def total_objective(
    ab: DirectionLosses,
    ba: DirectionLosses,
    kl: torch.Tensor,
    w: LossWeights,
) -> Tuple[torch.Tensor, LossReport]:
    """Differentiable generator total plus its per-term report"""
    zero = kl.new_zeros(())

    def pair(name: str) -> torch.Tensor:
        first, second = getattr(ab, name), getattr(ba, name)
        return (zero if first is None else first) + (zero if second is None else second)

    def vae_pair(name: str) -> torch.Tensor:
        return ab.vae.get(name, zero) + ba.vae.get(name, zero)

    terms = {
        "gan_g": pair("gan_g"),
        "cc": pair("cc"),
        "vae_label": vae_pair("vae_label"),
        "vae_inpaint_out": vae_pair("vae_inpaint_out"),
        "vae_inpaint_in": vae_pair("vae_inpaint_in"),
        "idt": pair("idt"),
        "relevancy": pair("relevancy"),
        "kl": kl,
    }
    total = (
        w.lambda_gan * terms["gan_g"]
        + terms["cc"]
        + terms["vae_label"]
        + terms["vae_inpaint_out"]
        + terms["vae_inpaint_in"]
        + terms["idt"]
        + terms["relevancy"]
        + w.lambda_kl * terms["kl"]
    )
    report = LossReport(**{name: _value(term) for name, term in terms.items()}, total_g=_value(total))
    return total, report
