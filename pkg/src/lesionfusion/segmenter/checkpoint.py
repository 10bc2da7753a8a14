"""Segmenter checkpoints: trainable parameters only, frozen weights by hash."""
from __future__ import annotations

import os
import tempfile
from dataclasses import asdict
from pathlib import Path

import torch

from ..errors import CheckpointError
from .lora import SegmenterState, inject_adapters
from .model import EncoderSpec, PromptSegmenter

SCHEMA_VERSION = 1


def save_segmenter(state: SegmenterState, path: Path) -> None:
    payload = {
        "schema_version": SCHEMA_VERSION,
        "kind": "segmenter",
        "encoder_spec": asdict(state.model.spec),
        "init_seed": state.model.init_seed,
        "rank": state.rank,
        "adapter_placement": [(a.layer_index, a.target) for a in state.adapters],
        "frozen_checksum": state.frozen_checksum(),
        "trainable": state.trainable_state_dict(),
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            torch.save(payload, f)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_segmenter(path: Path) -> SegmenterState:
    try:
        payload = torch.load(path, map_location="cpu", weights_only=False)
    except Exception as exc:
        raise CheckpointError(f"cannot read segmenter checkpoint {path}: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("kind") != "segmenter":
        raise CheckpointError(f"{path} is not a segmenter checkpoint")
    if payload.get("schema_version") != SCHEMA_VERSION:
        raise CheckpointError(
            f"segmenter checkpoint schema {payload.get('schema_version')} "
            f"incompatible with {SCHEMA_VERSION}"
        )
    spec = EncoderSpec(**payload["encoder_spec"])
    model = PromptSegmenter(spec, init_seed=payload["init_seed"])
    state = inject_adapters(model, rank=payload["rank"])
    if state.frozen_checksum() != payload["frozen_checksum"]:
        raise CheckpointError("frozen-encoder checksum mismatch on reload")
    named = dict(state.model.named_parameters())
    with torch.no_grad():
        for name, value in payload["trainable"].items():
            if name not in named:
                raise CheckpointError(f"unknown trainable parameter {name} in checkpoint")
            named[name].copy_(value)
    state.model.eval()
    return state
