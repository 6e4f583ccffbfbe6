from typing import Tuple

import torch
from torch import nn

from pathogan.schemas.netspec import NetSpec

LEAKY_SLOPE = 0.2


def same_conv(in_channels: int, out_channels: int, kernel: int, stride: int = 1) -> nn.Sequential:
    """Zero-padded convolution whose output size is exactly input / stride"""
    total = max(kernel - stride, 0)
    before = total // 2
    after = total - before
    return nn.Sequential(
        nn.ZeroPad2d((before, after, before, after)),
        nn.Conv2d(in_channels, out_channels, kernel, stride=stride),
    )


class ResidualBlock(nn.Module):
    """conv3 -> instance norm -> ELU -> conv3, summed with the input"""

    def __init__(self, features: int):
        super().__init__()
        self.block = nn.Sequential(
            same_conv(features, features, 3),
            nn.InstanceNorm2d(features),
            nn.ELU(),
            same_conv(features, features, 3),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x + self.block(x)


class SpecNetwork(nn.Module):
    """Network assembled from a NetSpec"""

    def __init__(self, spec: NetSpec, input_channels: int, layers: nn.ModuleList):
        super().__init__()
        self.spec = spec
        self.input_channels = input_channels
        self.layers = layers

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        for layer in self.layers:
            x = layer(x)
        return x

    @property
    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters())

    def describe(self) -> Tuple[str, ...]:
        return tuple(layer.token() for layer in self.spec.layers)


def init_weights(module: nn.Module, generator: torch.Generator) -> None:
    """N(0, 0.02) weights and zero biases for every conv and linear layer"""
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d, nn.Linear)):
            with torch.no_grad():
                m.weight.copy_(torch.randn(m.weight.shape, generator=generator) * 0.02)
                if m.bias is not None:
                    m.bias.zero_()
