"""Low-rank adapter injection into the frozen segmenter encoder.

Adapters wrap the query and value projections of every attention block.
The up-projection starts at zero, so a freshly injected model computes
exactly the same outputs as the frozen one.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import torch
import torch.nn as nn

from .model import PromptSegmenter


class LoRALinear(nn.Module):
    """Frozen base linear plus a trainable rank-r residual path."""

    def __init__(self, base: nn.Linear, rank: int, scale: float = 1.0):
        super().__init__()
        if rank <= 0:
            raise ValueError(f"rank must be positive, got {rank}")
        self.base = base
        self.rank = rank
        self.scale = scale
        self.down = nn.Linear(base.in_features, rank, bias=False)
        self.up = nn.Linear(rank, base.out_features, bias=False)
        nn.init.normal_(self.down.weight, std=1.0 / rank)
        nn.init.zeros_(self.up.weight)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.base(x) + self.scale * self.up(self.down(x))


@dataclass
class AdapterInfo:
    layer_index: int
    target: str  # "query" or "value"
    rank: int
    module: LoRALinear


@dataclass
class SegmenterState:
    """Frozen encoder + trainable adapters, decoder, and prompt embedding."""

    model: PromptSegmenter
    adapters: list[AdapterInfo]
    rank: int
    input_size: int

    def trainable_parameters(self):
        return [p for p in self.model.parameters() if p.requires_grad]

    def trainable_parameter_count(self) -> int:
        return sum(p.numel() for p in self.trainable_parameters())

    def frozen_checksum(self) -> str:
        h = hashlib.sha256()
        for name, p in sorted(self.model.named_parameters()):
            if not p.requires_grad:
                h.update(name.encode())
                h.update(p.detach().cpu().numpy().tobytes())
        return h.hexdigest()

    def trainable_state_dict(self) -> dict:
        return {
            name: p.detach().clone()
            for name, p in self.model.named_parameters()
            if p.requires_grad
        }


def inject_adapters(segmenter: PromptSegmenter, rank: int = 4) -> SegmenterState:
    """Freeze the encoder and add rank-``rank`` adapters to q/v projections.

    Decoder and prompt parameters stay trainable.
    """
    if rank <= 0:
        raise ValueError(f"rank must be positive, got {rank}")
    blocks = getattr(segmenter.encoder, "blocks", None)
    if blocks is None or len(blocks) == 0:
        raise ValueError("encoder has no attention blocks to adapt")

    for p in segmenter.encoder.parameters():
        p.requires_grad_(False)
    for p in segmenter.decoder.parameters():
        p.requires_grad_(True)
    segmenter.prompt_embed.requires_grad_(True)

    adapters: list[AdapterInfo] = []
    for i, blk in enumerate(blocks):
        for target, attr in (("query", "q_proj"), ("value", "v_proj")):
            base = getattr(blk, attr)
            if isinstance(base, LoRALinear):
                raise ValueError(f"block {i} {attr} already has an adapter")
            wrapped = LoRALinear(base, rank)
            wrapped.down.weight.requires_grad_(True)
            wrapped.up.weight.requires_grad_(True)
            setattr(blk, attr, wrapped)
            adapters.append(AdapterInfo(layer_index=i, target=target, rank=rank, module=wrapped))

    return SegmenterState(
        model=segmenter,
        adapters=adapters,
        rank=rank,
        input_size=segmenter.spec.input_size,
    )
