"""Promptable segmenter stand-in: ViT-style encoder + mask decoder + prompt.

The encoder mirrors the structural contract of large pretrained promptable
segmenters (per-block multi-head attention with explicit query/value
projections) at a size that trains on a workstation. Weights are built
deterministically from an init seed so frozen parameters can be referenced
by content hash in checkpoints.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import torch
import torch.nn as nn
import torch.nn.functional as F


@dataclass
class EncoderSpec:
    input_size: int = 224
    patch_size: int = 8
    dim: int = 96
    depth: int = 4
    heads: int = 4
    mlp_ratio: float = 2.0

    @property
    def grid(self) -> int:
        return self.input_size // self.patch_size


class AttentionBlock(nn.Module):
    """Pre-norm transformer block with separate q/k/v projection layers."""

    def __init__(self, dim: int, heads: int, mlp_ratio: float):
        super().__init__()
        self.heads = heads
        self.norm1 = nn.LayerNorm(dim)
        self.q_proj = nn.Linear(dim, dim)
        self.k_proj = nn.Linear(dim, dim)
        self.v_proj = nn.Linear(dim, dim)
        self.out_proj = nn.Linear(dim, dim)
        self.norm2 = nn.LayerNorm(dim)
        hidden = int(dim * mlp_ratio)
        self.mlp = nn.Sequential(nn.Linear(dim, hidden), nn.GELU(), nn.Linear(hidden, dim))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, n, d = x.shape
        h = self.norm1(x)
        q = self.q_proj(h).view(b, n, self.heads, -1).transpose(1, 2)
        k = self.k_proj(h).view(b, n, self.heads, -1).transpose(1, 2)
        v = self.v_proj(h).view(b, n, self.heads, -1).transpose(1, 2)
        attn = F.scaled_dot_product_attention(q, k, v)
        attn = attn.transpose(1, 2).reshape(b, n, d)
        x = x + self.out_proj(attn)
        x = x + self.mlp(self.norm2(x))
        return x


class PatchEncoder(nn.Module):
    def __init__(self, spec: EncoderSpec):
        super().__init__()
        self.spec = spec
        self.patch_embed = nn.Conv2d(3, spec.dim, spec.patch_size, stride=spec.patch_size)
        self.pos_embed = nn.Parameter(torch.zeros(1, spec.grid * spec.grid, spec.dim))
        nn.init.trunc_normal_(self.pos_embed, std=0.02)
        self.blocks = nn.ModuleList(
            [AttentionBlock(spec.dim, spec.heads, spec.mlp_ratio) for _ in range(spec.depth)]
        )
        self.norm = nn.LayerNorm(spec.dim)

    def forward(self, image: torch.Tensor) -> torch.Tensor:
        """(B, 3, S, S) -> feature map (B, dim, g, g)."""
        x = self.patch_embed(image)
        b, d, gh, gw = x.shape
        x = x.flatten(2).transpose(1, 2) + self.pos_embed[:, : gh * gw]
        for blk in self.blocks:
            x = blk(x)
        x = self.norm(x)
        return x.transpose(1, 2).reshape(b, d, gh, gw)


class MaskDecoder(nn.Module):
    """Upsampling conv decoder with a shallow skip from the raw image."""

    def __init__(self, dim: int, patch_size: int):
        super().__init__()
        stages = []
        ch = dim
        up = patch_size
        while up > 1:
            nxt = max(ch // 2, 16)
            stages.append(
                nn.Sequential(
                    nn.Upsample(scale_factor=2, mode="bilinear", align_corners=False),
                    nn.Conv2d(ch, nxt, 3, padding=1),
                    nn.GroupNorm(4, nxt),
                    nn.GELU(),
                )
            )
            ch = nxt
            up //= 2
        self.stages = nn.Sequential(*stages)
        self.image_skip = nn.Sequential(nn.Conv2d(3, 8, 3, padding=1), nn.GELU())
        self.head = nn.Conv2d(ch + 8, 1, 3, padding=1)

    def forward(self, feats: torch.Tensor, image: torch.Tensor) -> torch.Tensor:
        x = self.stages(feats)
        skip = self.image_skip(image)
        return self.head(torch.cat([x, skip], dim=1))


class PromptSegmenter(nn.Module):
    """Encoder + mask decoder + learnable default prompt embedding.

    No user prompt exists at deployment, so the prompt encoder reduces to a
    single learnable embedding added to the encoder feature map.
    """

    def __init__(self, spec: EncoderSpec, init_seed: int = 0):
        super().__init__()
        gen = torch.Generator().manual_seed(init_seed)
        with torch.random.fork_rng():
            torch.manual_seed(int(torch.randint(0, 2**31 - 1, (1,), generator=gen)))
            self.spec = spec
            self.init_seed = init_seed
            self.encoder = PatchEncoder(spec)
            self.decoder = MaskDecoder(spec.dim, spec.patch_size)
            self.prompt_embed = nn.Parameter(torch.zeros(1, spec.dim, 1, 1))

    def forward(self, image: torch.Tensor) -> torch.Tensor:
        feats = self.encoder(image) + self.prompt_embed
        return self.decoder(feats, image)
