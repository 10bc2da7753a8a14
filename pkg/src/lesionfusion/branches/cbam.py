"""Channel-then-spatial attention gating of a feature map."""
from __future__ import annotations

import torch
import torch.nn as nn


class ChannelAttention(nn.Module):
    """Shared MLP over max- and avg-pooled channel descriptors, sigmoid gate."""

    def __init__(self, channels: int, reduction: int = 8, bias: bool = True):
        super().__init__()
        hidden = max(channels // reduction, 1)
        self.mlp = nn.Sequential(
            nn.Conv2d(channels, hidden, 1, bias=bias),
            nn.ReLU(inplace=True),
            nn.Conv2d(hidden, channels, 1, bias=bias),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        avg = x.mean(dim=(2, 3), keepdim=True)
        mx = x.amax(dim=(2, 3), keepdim=True)
        return torch.sigmoid(self.mlp(avg) + self.mlp(mx))


class SpatialAttention(nn.Module):
    """7x7 convolution over channel-wise max/avg maps, sigmoid gate."""

    def __init__(self, kernel_size: int = 7, bias: bool = True):
        super().__init__()
        self.conv = nn.Conv2d(2, 1, kernel_size, padding=kernel_size // 2, bias=bias)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        avg = x.mean(dim=1, keepdim=True)
        mx = x.amax(dim=1, keepdim=True)
        return torch.sigmoid(self.conv(torch.cat([avg, mx], dim=1)))


class CBAM(nn.Module):
    """Sequential channel and spatial gating; output shape equals input shape.

    ``force_identity`` is a test hook that pins both gates at 1.
    """

    def __init__(self, channels: int, reduction: int = 8, kernel_size: int = 7, bias: bool = True):
        super().__init__()
        self.channel_attention = ChannelAttention(channels, reduction, bias)
        self.spatial_attention = SpatialAttention(kernel_size, bias)
        self.force_identity = False

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if self.force_identity:
            return x
        x = x * self.channel_attention(x)
        x = x * self.spatial_attention(x)
        return x
