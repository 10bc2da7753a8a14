"""Gradient-weighted class activation heatmaps for the branch extractors."""
from __future__ import annotations

import numpy as np
import torch
import torch.nn.functional as F


def grad_cam(
    model,
    image: np.ndarray,
    target_class: int,
    branch: str = "global",
) -> np.ndarray:
    """Heatmap in [0, 1] at image resolution for one branch head's logit.

    Tapped at the first encoder stage (stride 4), whose locations still have
    local receptive fields; deeper taps mix whole-image context into every
    position (pyramid top-down pathway, per-sample normalization statistics)
    and their maps come out near-uniform. For the same reason the channel
    weighting is element-wise — rectified gradient times activation, summed
    over channels — rather than the spatially averaged channel weights of
    the classic formulation, which cancel at a tap this early. The result is
    rectified and normalized by its max; all-negative evidence yields an
    all-zero map.
    """
    extractor = model.gfe if branch == "global" else model.lfe
    head = model.heads.fc_g if branch == "global" else model.heads.fc_l
    if extractor is None or head is None:
        raise ValueError(f"branch {branch!r} is not enabled in this model")

    model.eval()
    x = torch.from_numpy(np.ascontiguousarray(image.transpose(2, 0, 1))).float()[None]
    maps = extractor.encoder(x)
    tapped = maps[0]
    tapped.retain_grad()
    attended = extractor.cbam(extractor.fpn(maps))
    logits = head(attended.mean(dim=(2, 3)))
    score = logits[0, target_class]
    extractor.zero_grad(set_to_none=True)
    score.backward()

    grads = tapped.grad[0]  # (C, h, w)
    cam = torch.relu((torch.relu(grads) * tapped[0].detach()).sum(dim=0))
    peak = float(cam.max())
    if peak > 0:
        cam = cam / peak
    h, w = image.shape[:2]
    cam = F.interpolate(cam[None, None], size=(h, w), mode="bilinear", align_corners=False)
    return cam[0, 0].numpy()
