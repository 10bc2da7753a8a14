"""Synthetic endoscopy-like dataset generator with exact ground-truth masks.

Lets the whole pipeline run and be tested without clinical data: normal
images are textured background only, benign images carry one small smooth
elliptical blob, malignant images one larger irregular blob.
"""
from __future__ import annotations

import numpy as np
from scipy.ndimage import gaussian_filter, zoom

from .types import DatasetManifest, ImageSample, Label, Modality

# Background base colors per illumination palette (RGB in [0,1]).
_PALETTES = {
    Modality.WLI: np.array([0.78, 0.52, 0.48]),
    Modality.NBI: np.array([0.30, 0.48, 0.46]),
}

# Lesion tints, applied inside the mask region.
_BENIGN_TINT = {
    Modality.WLI: np.array([0.95, 0.88, 0.55]),
    Modality.NBI: np.array([0.66, 0.58, 0.30]),
}
_MALIGNANT_TINT = {
    Modality.WLI: np.array([0.48, 0.18, 0.16]),
    Modality.NBI: np.array([0.16, 0.24, 0.30]),
}


def _smooth_noise(rng: np.random.Generator, size: int, cells: int, amplitude: float) -> np.ndarray:
    """Low-frequency noise field in [-amplitude, amplitude], size x size."""
    coarse = rng.uniform(-1.0, 1.0, size=(cells, cells))
    field = zoom(coarse, size / cells, order=3)[:size, :size]
    if field.shape != (size, size):
        field = np.pad(field, ((0, size - field.shape[0]), (0, size - field.shape[1])), mode="edge")
    return amplitude * field


def _background(rng: np.random.Generator, size: int, modality: Modality) -> np.ndarray:
    base = _PALETTES[modality]
    img = np.broadcast_to(base, (size, size, 3)).astype(np.float64).copy()
    shading = _smooth_noise(rng, size, cells=6, amplitude=0.10)
    img += shading[..., None]
    for c in range(3):
        img[..., c] += _smooth_noise(rng, size, cells=16, amplitude=0.04)
    # fine mucosa speckle
    img += gaussian_filter(rng.normal(0.0, 0.05, size=(size, size)), 1.0)[..., None]
    return img


def _ellipse_mask(
    size: int,
    cx: float,
    cy: float,
    a: float,
    b: float,
    theta: float,
    radial_wobble: np.ndarray | None = None,
) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size]
    dx = xx - cx
    dy = yy - cy
    u = dx * np.cos(theta) + dy * np.sin(theta)
    v = -dx * np.sin(theta) + dy * np.cos(theta)
    r = np.sqrt((u / a) ** 2 + (v / b) ** 2)
    if radial_wobble is not None:
        phi = np.arctan2(v, u)
        n = len(radial_wobble)
        mod = np.zeros_like(phi)
        for k, (amp, phase) in enumerate(zip(radial_wobble, np.linspace(0, np.pi, n)), start=2):
            mod += amp * np.cos(k * phi + phase)
        r = r / np.clip(1.0 + mod, 0.5, 1.5)
    return (r <= 1.0).astype(np.uint8)


def _paint_lesion(
    rng: np.random.Generator,
    img: np.ndarray,
    mask: np.ndarray,
    tint: np.ndarray,
    texture_amp: float,
) -> np.ndarray:
    size = img.shape[0]
    lesion = np.broadcast_to(tint, img.shape).astype(np.float64).copy()
    lesion += gaussian_filter(rng.normal(0.0, texture_amp, size=(size, size)), 0.8)[..., None]
    lesion[..., 0] += _smooth_noise(rng, size, cells=24, amplitude=texture_amp / 2)
    m = mask[..., None].astype(np.float64)
    return img * (1.0 - m) + lesion * m


def _make_sample(
    rng: np.random.Generator,
    name: str,
    label: Label,
    modality: Modality,
    patient_id: str,
    size: int,
) -> ImageSample:
    img = _background(rng, size, modality)
    mask = np.zeros((size, size), dtype=np.uint8)
    if label != Label.NORMAL:
        margin = 0.30 * size
        cx = rng.uniform(margin, size - margin)
        cy = rng.uniform(margin, size - margin)
        theta = rng.uniform(0.0, np.pi)
        if label == Label.BENIGN:
            # small smooth ellipse, axis ratio <= 2
            a = rng.uniform(0.17, 0.22) * size
            b = a * rng.uniform(0.55, 1.0)
            mask = _ellipse_mask(size, cx, cy, a, b, theta)
            img = _paint_lesion(rng, img, mask, _BENIGN_TINT[modality], texture_amp=0.03)
        else:
            # larger blob with low-frequency radial irregularity
            a = rng.uniform(0.24, 0.30) * size
            b = a * rng.uniform(0.75, 1.0)
            wobble = rng.uniform(0.05, 0.16, size=3)
            mask = _ellipse_mask(size, cx, cy, a, b, theta, radial_wobble=wobble)
            img = _paint_lesion(rng, img, mask, _MALIGNANT_TINT[modality], texture_amp=0.10)
    img = np.clip(img, 0.0, 1.0).astype(np.float32)
    return ImageSample(
        name=name,
        image=img,
        label=label,
        modality=modality,
        patient_id=patient_id,
        mask=mask,
    )


def generate_synthetic(n_per_class: int, size: int, seed: int) -> DatasetManifest:
    """Deterministic synthetic dataset: ``n_per_class`` samples per class.

    Every sample gets its own patient id, so patient-disjoint splitting is
    always possible. Modalities alternate round-robin within each class.
    """
    if n_per_class < 1:
        raise ValueError(f"n_per_class must be >= 1, got {n_per_class}")
    if size < 64:
        raise ValueError(f"size must be >= 64, got {size}")
    rng = np.random.default_rng(seed)
    modalities = [Modality.NBI, Modality.WLI]
    samples = []
    for label in Label:
        for i in range(n_per_class):
            tag = label.name.lower()
            name = f"{tag}_{i:04d}"
            samples.append(
                _make_sample(
                    rng,
                    name=name,
                    label=label,
                    modality=modalities[i % 2],
                    patient_id=f"syn{seed}_{tag[0]}{i:04d}",
                    size=size,
                )
            )
    manifest = DatasetManifest(samples=samples, seed=seed)
    manifest.validate()
    return manifest
