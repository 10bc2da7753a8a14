"""Feature-pyramid top-down pathway keeping only the bottom projection head."""
from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F


class FpnBottomHead(nn.Module):
    """Lateral 1x1 projections + 2x-upsample additions, bottom output only.

    Only the finest-resolution merged map is materialized, followed by its
    3x3 smoothing projection; this is a classification pipeline and the
    other pyramid heads are unused.
    """

    def __init__(self, in_channels: tuple[int, int, int, int], width: int = 256, bias: bool = True):
        super().__init__()
        if len(in_channels) != 4:
            raise ValueError(f"expected 4 scales, got {len(in_channels)}")
        self.in_channels = tuple(in_channels)
        self.width = width
        self.laterals = nn.ModuleList(
            [nn.Conv2d(c, width, 1, bias=bias) for c in in_channels]
        )
        self.smooth = nn.Conv2d(width, width, 3, padding=1, bias=bias)

    def forward(self, maps: list[torch.Tensor]) -> torch.Tensor:
        if len(maps) != 4:
            raise ValueError(f"expected 4 scales, got {len(maps)}")
        for m, c in zip(maps, self.in_channels):
            if m.shape[1] != c:
                raise ValueError(
                    f"channel mismatch: map has {m.shape[1]}, lateral expects {c}"
                )
        top = self.laterals[3](maps[3])
        for i in (2, 1, 0):
            top = self.laterals[i](maps[i]) + F.interpolate(top, scale_factor=2, mode="nearest")
        return self.smooth(top)
