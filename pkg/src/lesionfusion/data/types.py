"""Core dataset types: samples, manifests, and their invariants."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from enum import Enum, IntEnum

import numpy as np


class Label(IntEnum):
    NORMAL = 0
    BENIGN = 1
    MALIGNANT = 2


class Modality(str, Enum):
    NBI = "NBI"
    WLI = "WLI"


class Split(str, Enum):
    TRAIN = "train"
    VAL = "val"
    TEST = "test"
    EXTERNAL = "external"


@dataclass
class ImageSample:
    """One image with label, modality, optional ground-truth mask, patient id.

    ``image`` is (H, W, 3) float32 in [0, 1]; ``mask`` is (H, W) uint8 with
    values in {0, 1} and the same spatial size as the image.
    """

    name: str
    image: np.ndarray
    label: Label
    modality: Modality
    patient_id: str
    mask: np.ndarray | None = None
    split: Split | None = None

    def validate(self) -> None:
        if self.image.ndim != 3 or self.image.shape[2] != 3:
            raise ValueError(f"{self.name}: image must be (H, W, 3), got {self.image.shape}")
        if self.image.shape[0] != self.image.shape[1]:
            raise ValueError(f"{self.name}: image must be square, got {self.image.shape[:2]}")
        if float(self.image.min()) < 0.0 or float(self.image.max()) > 1.0:
            raise ValueError(f"{self.name}: image values outside [0, 1]")
        if self.mask is not None:
            if self.mask.shape != self.image.shape[:2]:
                raise ValueError(
                    f"{self.name}: mask shape {self.mask.shape} does not match "
                    f"image {self.image.shape[:2]}"
                )
            vals = np.unique(self.mask)
            if not np.all(np.isin(vals, (0, 1))):
                raise ValueError(f"{self.name}: mask values must be in {{0, 1}}")
            if self.label == Label.NORMAL and self.mask.any():
                raise ValueError(f"{self.name}: normal sample has nonzero mask")

    def with_split(self, split: Split) -> "ImageSample":
        return replace(self, split=split)

    def content_digest(self) -> str:
        h = hashlib.sha256()
        h.update(self.name.encode())
        h.update(self.image.astype(np.float32).tobytes())
        h.update(bytes([int(self.label)]))
        h.update(self.modality.value.encode())
        h.update(self.patient_id.encode())
        if self.mask is not None:
            h.update(self.mask.astype(np.uint8).tobytes())
        if self.split is not None:
            h.update(self.split.value.encode())
        return h.hexdigest()


@dataclass
class DatasetManifest:
    """Ordered collection of samples plus bookkeeping.

    Invariants: no patient id spans more than one of {train, val, test};
    ``class_counts`` always equals the recomputed per-split counts.
    """

    samples: list[ImageSample]
    seed: int
    validation_errors: list[str] = field(default_factory=list)

    @property
    def class_counts(self) -> dict[str, dict[str, int]]:
        counts: dict[str, dict[str, int]] = {}
        for s in self.samples:
            split = s.split.value if s.split is not None else "unassigned"
            per = counts.setdefault(split, {lbl.name.lower(): 0 for lbl in Label})
            per[s.label.name.lower()] += 1
        return counts

    def subset(self, split: Split) -> list[ImageSample]:
        return [s for s in self.samples if s.split == split]

    def patient_ids(self) -> set[str]:
        return {s.patient_id for s in self.samples}

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(str(self.seed).encode())
        for s in self.samples:
            h.update(s.content_digest().encode())
        return h.hexdigest()

    def validate(self) -> None:
        seen: dict[str, Split] = {}
        core = {Split.TRAIN, Split.VAL, Split.TEST}
        for s in self.samples:
            s.validate()
            if s.split in core:
                prev = seen.setdefault(s.patient_id, s.split)
                if prev != s.split:
                    raise ValueError(
                        f"patient {s.patient_id} appears in both {prev.value} and {s.split.value}"
                    )
