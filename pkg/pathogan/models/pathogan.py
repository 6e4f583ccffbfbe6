"""
The two translation pathways and their discriminators.

A -> B goes through the VAE path: gamma from the context encoder, delta from
the pathology encoder (or the prior), decoded jointly into residual maps.
B -> A is a direct residual generator. Both blend their residual into the input.
"""
import logging
from typing import TYPE_CHECKING, Dict, Iterator, Optional, Tuple, Union

import torch
from torch import nn

from pathogan.models.domain import LatentCode, Mode, ResidualOutput, TranslationResult
from pathogan.models.networks import SpecNetwork
from pathogan.services.netspec import ShapeMismatch, build_network, infer_shapes, parse_netspec

if TYPE_CHECKING:
    from pathogan.config import RunConfig

logger = logging.getLogger(__name__)

ROLES = ("gamma_enc", "delta_enc", "decoder", "zb", "disc_A", "disc_B")
GENERATOR_ROLES = ("gamma_enc", "delta_enc", "decoder", "zb")
DISCRIMINATOR_ROLES = ("disc_A", "disc_B")

PRIOR = "sample_prior"
ZERO = "zero"


class ChannelMismatch(ShapeMismatch):
    pass


def _noise(like: torch.Tensor, generator: Optional[torch.Generator]) -> torch.Tensor:
    return torch.randn(like.shape, generator=generator, dtype=like.dtype, device=like.device)


def activate_residual(raw: torch.Tensor, mode: Mode, generator: Optional[torch.Generator] = None) -> ResidualOutput:
    """Sigmoid on map 0 (plus unit gaussian noise while training), tanh on maps 1..n"""
    logits = raw[:, :1]
    if mode == Mode.TRAIN:
        logits = logits + _noise(logits, generator)
    return ResidualOutput(raw=raw, labelmap=torch.sigmoid(logits), inpaintings=torch.tanh(raw[:, 1:]))


def blend(x: torch.Tensor, residual: ResidualOutput) -> torch.Tensor:
    labelmap, inpaintings = residual.labelmap, residual.inpaintings
    if inpaintings.shape != x.shape or labelmap.shape[0] != x.shape[0] or labelmap.shape[2:] != x.shape[2:]:
        raise ShapeMismatch(
            f"Cannot blend input {tuple(x.shape)} with labelmap {tuple(labelmap.shape)} "
            f"and inpaintings {tuple(inpaintings.shape)}"
        )
    return labelmap * inpaintings + (1 - labelmap) * x


def reparameterize(
    mean: torch.Tensor,
    logvar: torch.Tensor,
    mode: Mode,
    generator: Optional[torch.Generator] = None,
) -> torch.Tensor:
    if mean.shape != logvar.shape:
        raise ShapeMismatch(f"mean {tuple(mean.shape)} and logvar {tuple(logvar.shape)} differ")
    if mode == Mode.TEST:
        return mean
    return mean + torch.exp(0.5 * logvar) * _noise(mean, generator)


def discriminate(d: SpecNetwork, y: torch.Tensor) -> torch.Tensor:
    """Unbounded patch score map"""
    if y.dim() != 4 or y.shape[1] != d.input_channels:
        raise ShapeMismatch(f"Discriminator expects (B, {d.input_channels}, H, W), got {tuple(y.shape)}")
    return d(y)


DeltaArg = Union[LatentCode, str, None]


class PathoGAN(nn.Module):
    """Both generators and both discriminators, keyed by role"""

    def __init__(self, networks: Dict[str, SpecNetwork], n_channels: int, latent_size: int):
        super().__init__()
        missing = [role for role in ROLES if role not in networks]
        if missing:
            raise ValueError(f"Missing networks for roles {missing}")
        self.nets = nn.ModuleDict({role: networks[role] for role in ROLES})
        self.n_channels = n_channels
        self.latent_size = latent_size

    @classmethod
    def from_config(cls, config: "RunConfig", seed: Optional[int] = None) -> "PathoGAN":
        """Parse, shape-check and build all six networks; role k is seeded with seed + k"""
        seed = config.train.seed if seed is None else seed
        symbols = config.symbols()
        n, size, z = config.model.n_channels, config.model.image_size, config.model.latent_size
        image = (n, size, size)
        arch = config.arch

        plans = {
            "gamma_enc": (arch.encoder, image, (2 * z,)),
            "delta_enc": (arch.encoder, image, (2 * z,)),
            "decoder": (arch.decoder, (2 * z,), (symbols["r"], size, size)),
            "zb": (arch.zb, image, (symbols["r"], size, size)),
            "disc_A": (arch.discriminator, image, None),
            "disc_B": (arch.discriminator, image, None),
        }
        networks = {}
        for offset, role in enumerate(ROLES):
            text, input_shape, expected = plans[role]
            spec = parse_netspec(text, symbols)
            output = infer_shapes(spec, input_shape)[-1]
            if expected is not None and output != expected:
                raise ShapeMismatch(f"{role} maps {input_shape} to {output}, expected {expected}")
            if expected is None and (len(output) != 3 or output[0] != 1):
                raise ShapeMismatch(f"{role} must produce a 1-channel score map, got {output}")
            networks[role] = build_network(spec, input_shape[0], seed + offset)
        model = cls(networks, n_channels=n, latent_size=z)
        logger.info(
            "Built PathoGAN for %d channel(s) at %dx%d, z=%d, i=%d: %d parameters",
            n, size, size, z, symbols["i"], sum(p.numel() for p in model.parameters()),
        )
        return model

    def _check_input(self, x: torch.Tensor) -> None:
        if x.dim() != 4:
            raise ShapeMismatch(f"Expected a (B, C, H, W) batch, got {tuple(x.shape)}")
        if x.shape[1] != self.n_channels:
            raise ChannelMismatch(f"Model was built for {self.n_channels} channel(s), input has {x.shape[1]}")

    def encode(self, role: str, x: torch.Tensor, mode: Mode, generator: Optional[torch.Generator] = None) -> LatentCode:
        out = self.nets[role](x)
        mean, logvar = out.chunk(2, dim=1)
        return LatentCode(mean=mean, logvar=logvar, sample=reparameterize(mean, logvar, mode, generator))

    def sample_prior(self, batch: int, like: torch.Tensor, generator: Optional[torch.Generator] = None) -> LatentCode:
        zeros = like.new_zeros((batch, self.latent_size))
        return LatentCode(mean=zeros, logvar=zeros, sample=_noise(zeros, generator))

    def zero_code(self, batch: int, like: torch.Tensor) -> LatentCode:
        zeros = like.new_zeros((batch, self.latent_size))
        return LatentCode(mean=zeros, logvar=zeros, sample=zeros)

    def generator_A_forward(
        self,
        x_A: torch.Tensor,
        delta_B: DeltaArg = None,
        mode: Mode = Mode.TRAIN,
        generator: Optional[torch.Generator] = None,
    ) -> TranslationResult:
        """Healthy -> pathological; delta_B is a code, "zero", or None/"sample_prior" for a prior draw"""
        self._check_input(x_A)
        gamma = self.encode("gamma_enc", x_A, mode, generator)
        if delta_B is None or delta_B == PRIOR:
            delta_B = self.sample_prior(x_A.shape[0], x_A, generator)
        elif delta_B == ZERO:
            delta_B = self.zero_code(x_A.shape[0], x_A)
        raw = self.nets["decoder"](torch.cat([gamma.sample, delta_B.sample], dim=1))
        residual = activate_residual(raw, mode, generator)
        return TranslationResult(
            output=blend(x_A, residual), residual=residual, latent_gamma=gamma, latent_delta=delta_B
        )

    def encode_pathology(
        self,
        x_B: torch.Tensor,
        l_B: torch.Tensor,
        mode: Mode = Mode.TRAIN,
        generator: Optional[torch.Generator] = None,
    ) -> LatentCode:
        self._check_input(x_B)
        if l_B.shape[0] != x_B.shape[0] or l_B.shape[2:] != x_B.shape[2:]:
            raise ShapeMismatch(f"Labelmap {tuple(l_B.shape)} does not match image {tuple(x_B.shape)}")
        return self.encode("delta_enc", l_B * x_B, mode, generator)

    def generator_B_forward(
        self,
        x_B: torch.Tensor,
        mode: Mode = Mode.TRAIN,
        generator: Optional[torch.Generator] = None,
    ) -> TranslationResult:
        """Pathological -> healthy"""
        self._check_input(x_B)
        residual = activate_residual(self.nets["zb"](x_B), mode, generator)
        return TranslationResult(output=blend(x_B, residual), residual=residual)

    def cycle_A(
        self,
        x_A: torch.Tensor,
        mode: Mode = Mode.TRAIN,
        generator: Optional[torch.Generator] = None,
    ) -> Tuple[TranslationResult, TranslationResult]:
        hat = self.generator_A_forward(x_A, None, mode, generator)
        tilde = self.generator_B_forward(hat.output, mode, generator)
        return hat, tilde

    def cycle_B(
        self,
        x_B: torch.Tensor,
        mode: Mode = Mode.TRAIN,
        generator: Optional[torch.Generator] = None,
    ) -> Tuple[TranslationResult, TranslationResult]:
        hat = self.generator_B_forward(x_B, mode, generator)
        delta = self.encode_pathology(x_B, hat.labelmap, mode, generator)
        tilde = self.generator_A_forward(hat.output, delta, mode, generator)
        return hat, tilde

    def discriminate(self, role: str, y: torch.Tensor) -> torch.Tensor:
        return discriminate(self.nets[role], y)

    def generator_parameters(self) -> Iterator[nn.Parameter]:
        for role in GENERATOR_ROLES:
            yield from self.nets[role].parameters()

    def discriminator_parameters(self) -> Iterator[nn.Parameter]:
        for role in DISCRIMINATOR_ROLES:
            yield from self.nets[role].parameters()
