"""Lesion mask container and mask-guided cropping."""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import ndimage


class MaskSource(str, Enum):
    PREDICTED = "predicted"
    GROUND_TRUTH = "ground_truth"


@dataclass
class LesionMask:
    mask: np.ndarray  # (H, W) uint8 in {0, 1}
    source: MaskSource
    threshold_used: float = 0.5

    def __post_init__(self):
        vals = np.unique(self.mask)
        if not np.all(np.isin(vals, (0, 1))):
            raise ValueError("mask values must be in {0, 1}")


def _center_crop(image: np.ndarray, size: int) -> np.ndarray:
    h, w = image.shape[:2]
    ch = min(size, h)
    cw = min(size, w)
    y0 = (h - ch) // 2
    x0 = (w - cw) // 2
    return image[y0 : y0 + ch, x0 : x0 + cw]


def crop_lesion(
    image: np.ndarray,
    mask: LesionMask | np.ndarray,
    fallback_size: int = 256,
    margin: int = 8,
) -> np.ndarray:
    """Bounding-box crop of the background-zeroed image around the lesion.

    The image is multiplied pixel-wise by the mask, the largest connected
    foreground component is selected, and its axis-aligned bounding box
    (expanded by ``margin``, clipped to the image) is cropped. An empty mask
    falls back to a ``fallback_size`` center crop of the raw image.
    """
    m = mask.mask if isinstance(mask, LesionMask) else np.asarray(mask)
    if m.shape != image.shape[:2]:
        raise ValueError(f"mask shape {m.shape} does not match image {image.shape[:2]}")
    if not m.any():
        return _center_crop(image, fallback_size)

    labeled, n = ndimage.label(m)
    if n > 1:
        sizes = ndimage.sum_labels(np.ones_like(m), labeled, index=range(1, n + 1))
        keep = int(np.argmax(sizes)) + 1
        component = labeled == keep
    else:
        component = m.astype(bool)

    masked = image * m[..., None].astype(image.dtype)
    ys, xs = np.nonzero(component)
    h, w = m.shape
    y0 = max(int(ys.min()) - margin, 0)
    y1 = min(int(ys.max()) + margin, h - 1)
    x0 = max(int(xs.min()) - margin, 0)
    x1 = min(int(xs.max()) + margin, w - 1)
    return masked[y0 : y1 + 1, x0 : x1 + 1]
