"""Stage-1 fine-tuning of the adapted segmenter and mask inference."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F

from ..data.types import DatasetManifest, Split
from .crop import LesionMask, MaskSource
from .lora import SegmenterState
from .metrics import soft_dice_loss


@dataclass
class Stage1Config:
    steps: int = 300
    batch_size: int = 8
    lr: float = 4e-3
    warmup_steps: int = 20
    dice_weight: float = 0.9
    ce_weight: float = 0.1
    seed: int = 0


def _to_tensor(image: np.ndarray) -> torch.Tensor:
    return torch.from_numpy(np.ascontiguousarray(image.transpose(2, 0, 1))).float()


def _resize_batch(images: torch.Tensor, size: int) -> torch.Tensor:
    if images.shape[-1] == size:
        return images
    return F.interpolate(images, size=(size, size), mode="bilinear", align_corners=False)


def finetune_segmenter(
    state: SegmenterState,
    manifest: DatasetManifest,
    cfg: Stage1Config,
) -> tuple[SegmenterState, list[float]]:
    """Train adapters + decoder + prompt on masked train-split samples.

    Per-step loss is ``dice_weight`` * soft Dice + ``ce_weight`` * binary
    cross-entropy. Frozen encoder parameters are untouched. Returns the
    updated state and the per-step loss history.
    """
    train = [s for s in manifest.subset(Split.TRAIN) if s.mask is not None]
    if not train:
        raise ValueError("no train-split samples with ground-truth masks")
    if cfg.steps == 0:
        return state, []

    size = state.input_size
    images = torch.stack([_to_tensor(s.image) for s in train])
    masks = torch.stack([torch.from_numpy(s.mask).float()[None] for s in train])
    images = _resize_batch(images, size)
    masks = (_resize_batch(masks, size) > 0.5).float()

    rng = np.random.default_rng(cfg.seed)
    opt = torch.optim.Adam(state.trainable_parameters(), lr=cfg.lr)
    model = state.model
    model.train()
    history: list[float] = []
    n = len(train)
    for step in range(cfg.steps):
        if cfg.warmup_steps > 0:
            ramp = min(1.0, (step + 1) / cfg.warmup_steps)
            for group in opt.param_groups:
                group["lr"] = cfg.lr * ramp
        idx = rng.choice(n, size=min(cfg.batch_size, n), replace=False)
        xb = images[idx]
        yb = masks[idx]
        logits = model(xb)
        loss = cfg.dice_weight * soft_dice_loss(logits, yb) + cfg.ce_weight * F.binary_cross_entropy_with_logits(logits, yb)
        opt.zero_grad()
        loss.backward()
        opt.step()
        history.append(float(loss.item()))
    model.eval()
    return state, history


def predict_mask(state: SegmenterState, image: np.ndarray, threshold: float = 0.5) -> LesionMask:
    """Predict a binary lesion mask at the original image resolution."""
    model = state.model
    was_training = model.training
    model.eval()
    with torch.no_grad():
        x = _to_tensor(image)[None]
        x = _resize_batch(x, state.input_size)
        logits = model(x)
        probs = torch.sigmoid(logits)
        h, w = image.shape[:2]
        if probs.shape[-2:] != (h, w):
            probs = F.interpolate(probs, size=(h, w), mode="bilinear", align_corners=False)
        mask = (probs[0, 0] > threshold).numpy().astype(np.uint8)
    if was_training:
        model.train()
    return LesionMask(mask=mask, source=MaskSource.PREDICTED, threshold_used=threshold)
