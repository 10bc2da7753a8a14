"""Four-stage residual encoder producing multi-scale feature maps.

GroupNorm is used throughout so forward passes are batch-size independent
and zero inputs stay zero when biases are disabled (linearity probes).
LeakyReLU keeps gradients flowing when training from scratch; with plain
ReLU the whole-image branch can die irrecoverably on small datasets.
"""
from __future__ import annotations

import torch
import torch.nn as nn

# name -> (per-stage output channels, pyramid/feature width)
PRESETS: dict[str, tuple[tuple[int, int, int, int], int]] = {
    "toy": ((8, 8, 8, 8), 8),
    "tiny": ((16, 32, 64, 128), 64),
    "resnet50": ((256, 512, 1024, 2048), 256),
}


def _gn(channels: int) -> nn.GroupNorm:
    return nn.GroupNorm(min(4, channels), channels)


class ResidualBlock(nn.Module):
    def __init__(self, cin: int, cout: int, stride: int, bias: bool):
        super().__init__()
        self.conv1 = nn.Conv2d(cin, cout, 3, stride=stride, padding=1, bias=bias)
        self.norm1 = _gn(cout)
        self.conv2 = nn.Conv2d(cout, cout, 3, padding=1, bias=bias)
        self.norm2 = _gn(cout)
        self.act = nn.LeakyReLU(0.01, inplace=True)
        if stride != 1 or cin != cout:
            self.shortcut = nn.Conv2d(cin, cout, 1, stride=stride, bias=bias)
        else:
            self.shortcut = nn.Identity()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        out = self.act(self.norm1(self.conv1(x)))
        out = self.norm2(self.conv2(out))
        return self.act(out + self.shortcut(x))


class MultiScaleEncoder(nn.Module):
    """Stem (stride 2) + four residual stages at strides 4, 8, 16, 32."""

    def __init__(self, channels: tuple[int, int, int, int], bias: bool = True):
        super().__init__()
        self.channels = tuple(channels)
        stem_ch = max(channels[0] // 2, 8)
        self.stem = nn.Sequential(
            nn.Conv2d(3, stem_ch, 3, stride=2, padding=1, bias=bias),
            _gn(stem_ch),
            nn.LeakyReLU(0.01, inplace=True),
        )
        stages = []
        cin = stem_ch
        for cout in channels:
            stages.append(
                nn.Sequential(
                    ResidualBlock(cin, cout, stride=2, bias=bias),
                    ResidualBlock(cout, cout, stride=1, bias=bias),
                )
            )
            cin = cout
        self.stages = nn.ModuleList(stages)

    def forward(self, x: torch.Tensor) -> list[torch.Tensor]:
        if x.shape[-1] < 32 or x.shape[-2] < 32:
            raise ValueError(f"input must be at least 32px, got {tuple(x.shape[-2:])}")
        x = self.stem(x)
        maps = []
        for stage in self.stages:
            x = stage(x)
            maps.append(x)
        return maps
