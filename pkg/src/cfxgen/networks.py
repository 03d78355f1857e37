"""Generator and discriminator networks for the translation system.

The generator is the widely reproduced encoder / residual / decoder build:
a 7x7 stem, two stride-2 downsampling convolutions, a residual trunk (6
blocks up to 128px, 9 above), two resize-convolution upsampling stages and
a tanh output, so every output pixel lands in [-1, 1]. The discriminator is
a PatchGAN: a stack of stride-2 4x4 convolutions followed by two stride-1
layers, emitting a 2-D grid of per-patch validity scores whose size follows
from the input resolution.
"""
from __future__ import annotations

import torch
import torch.nn as nn


def default_residual_blocks(resolution: int) -> int:
    return 6 if resolution <= 128 else 9


def init_weights(module: nn.Module, std: float = 0.02) -> None:
    if isinstance(module, nn.Conv2d):
        nn.init.normal_(module.weight, 0.0, std)
        if module.bias is not None:
            nn.init.zeros_(module.bias)


class ResidualBlock(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.block = nn.Sequential(
            nn.Conv2d(channels, channels, 3, padding=1, padding_mode="reflect"),
            nn.InstanceNorm2d(channels),
            nn.ReLU(inplace=True),
            nn.Conv2d(channels, channels, 3, padding=1, padding_mode="reflect"),
            nn.InstanceNorm2d(channels),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x + self.block(x)


class ResnetGenerator(nn.Module):
    def __init__(
        self,
        resolution: int,
        base_width: int = 64,
        n_residual_blocks: int | None = None,
        channels: int = 1,
    ):
        super().__init__()
        if n_residual_blocks is None:
            n_residual_blocks = default_residual_blocks(resolution)
        width = base_width
        layers: list[nn.Module] = [
            nn.Conv2d(channels, width, 7, padding=3, padding_mode="reflect"),
            nn.InstanceNorm2d(width),
            nn.ReLU(inplace=True),
        ]
        for _ in range(2):
            layers += [
                nn.Conv2d(width, width * 2, 3, stride=2, padding=1),
                nn.InstanceNorm2d(width * 2),
                nn.ReLU(inplace=True),
            ]
            width *= 2
        layers += [ResidualBlock(width) for _ in range(n_residual_blocks)]
        for _ in range(2):
            layers += [
                nn.Upsample(scale_factor=2, mode="nearest"),
                nn.Conv2d(width, width // 2, 3, padding=1),
                nn.InstanceNorm2d(width // 2),
                nn.ReLU(inplace=True),
            ]
            width //= 2
        layers += [
            nn.Conv2d(width, channels, 7, padding=3, padding_mode="reflect"),
            nn.Tanh(),
        ]
        self.model = nn.Sequential(*layers)
        self.apply(init_weights)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.model(x)


class PatchDiscriminator(nn.Module):
    """Per-patch real/fake scores as an (N, 1, h, w) grid, no final sigmoid."""

    def __init__(self, base_width: int = 64, n_downsample_layers: int = 3, channels: int = 1):
        super().__init__()
        if n_downsample_layers < 1:
            raise ValueError("need at least one downsampling layer")
        width = base_width
        layers: list[nn.Module] = [
            nn.Conv2d(channels, width, 4, stride=2, padding=1),
            nn.LeakyReLU(0.2, inplace=True),
        ]
        for _ in range(n_downsample_layers - 1):
            layers += [
                nn.Conv2d(width, width * 2, 4, stride=2, padding=1),
                nn.InstanceNorm2d(width * 2),
                nn.LeakyReLU(0.2, inplace=True),
            ]
            width *= 2
        layers += [
            nn.Conv2d(width, width * 2, 4, stride=1, padding=1),
            nn.InstanceNorm2d(width * 2),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(width * 2, 1, 4, stride=1, padding=1),
        ]
        self.model = nn.Sequential(*layers)
        self.apply(init_weights)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.model(x)
