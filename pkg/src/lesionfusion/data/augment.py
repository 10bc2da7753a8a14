"""Online training augmentation: random affine, horizontal flip, color jitter.

Geometric transforms are applied identically to the image and its mask
(mask re-binarized afterwards); color jitter never touches the mask.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.ndimage import affine_transform


@dataclass
class AugmentPolicy:
    hflip: bool = True
    hflip_prob: float = 0.5
    affine: bool = True
    max_rotate_deg: float = 15.0
    max_translate_frac: float = 0.05
    scale_range: tuple[float, float] = (0.9, 1.1)
    color_jitter: bool = True
    brightness: float = 0.2
    contrast: float = 0.2
    saturation: float = 0.2

    @classmethod
    def off(cls) -> "AugmentPolicy":
        return cls(hflip=False, affine=False, color_jitter=False)


def _affine_matrix(rng: np.random.Generator, policy: AugmentPolicy, size: int):
    angle = np.deg2rad(rng.uniform(-policy.max_rotate_deg, policy.max_rotate_deg))
    scale = rng.uniform(*policy.scale_range)
    tmax = policy.max_translate_frac * size
    tx, ty = rng.uniform(-tmax, tmax, size=2)
    c, s = np.cos(angle), np.sin(angle)
    # output->input map around the image center (row, col order)
    rot = np.array([[c, -s], [s, c]]) / scale
    center = (size - 1) / 2.0
    offset = np.array([center, center]) - rot @ np.array([center + ty, center + tx])
    return rot, offset


def _jitter(rng: np.random.Generator, img: np.ndarray, policy: AugmentPolicy) -> np.ndarray:
    out = img.astype(np.float64)
    if policy.brightness > 0:
        out = out * rng.uniform(1 - policy.brightness, 1 + policy.brightness)
    if policy.contrast > 0:
        f = rng.uniform(1 - policy.contrast, 1 + policy.contrast)
        out = (out - out.mean()) * f + out.mean()
    if policy.saturation > 0:
        f = rng.uniform(1 - policy.saturation, 1 + policy.saturation)
        gray = out.mean(axis=2, keepdims=True)
        out = gray + (out - gray) * f
    return out


def augment(sample, policy: AugmentPolicy, seed: int):
    """Return an augmented copy of ``sample``; identity when policy is all-off."""
    rng = np.random.default_rng(seed)
    img = sample.image.astype(np.float64)
    mask = None if sample.mask is None else sample.mask.astype(np.float64)

    if policy.hflip and rng.uniform() < policy.hflip_prob:
        img = img[:, ::-1].copy()
        if mask is not None:
            mask = mask[:, ::-1].copy()

    if policy.affine:
        size = img.shape[0]
        rot, offset = _affine_matrix(rng, policy, size)
        channels = [
            affine_transform(img[..., c], rot, offset=offset, order=1, mode="nearest")
            for c in range(3)
        ]
        img = np.stack(channels, axis=-1)
        if mask is not None:
            mask = affine_transform(mask, rot, offset=offset, order=0, mode="constant")

    if policy.color_jitter:
        img = _jitter(rng, img, policy)

    img = np.clip(img, 0.0, 1.0).astype(np.float32)
    if mask is not None:
        mask = (mask > 0.5).astype(np.uint8)
        if sample.label == 0 and mask.any():
            mask = np.zeros_like(mask)
    return replace(sample, image=img, mask=mask)
