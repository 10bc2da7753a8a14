"""Branch feature extractor: encoder -> pyramid bottom head -> CBAM -> GAP.

The global and local branches are separate instances and never share
parameters.
"""
from __future__ import annotations

import torch
import torch.nn as nn

from .cbam import CBAM
from .encoder import PRESETS, MultiScaleEncoder
from .fpn import FpnBottomHead


class FeatureExtractor(nn.Module):
    def __init__(self, preset: str = "tiny", bias: bool = True):
        super().__init__()
        if preset not in PRESETS:
            raise ValueError(f"unknown preset {preset!r}, choose from {sorted(PRESETS)}")
        channels, width = PRESETS[preset]
        self.preset = preset
        self.feature_dim = width
        self.encoder = MultiScaleEncoder(channels, bias=bias)
        self.fpn = FpnBottomHead(channels, width=width, bias=bias)
        self.cbam = CBAM(width, bias=bias)

    def forward_maps(self, images: torch.Tensor) -> torch.Tensor:
        """Attended stride-4 feature map; the Grad-CAM tap point."""
        maps = self.encoder(images)
        return self.cbam(self.fpn(maps))

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        """(B, 3, S, S) -> pooled feature vectors (B, D)."""
        return self.forward_maps(images).mean(dim=(2, 3))
