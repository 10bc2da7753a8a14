"""Patient-disjoint dataset splitting via stable hashing."""
from __future__ import annotations

import hashlib
from dataclasses import replace

from .types import DatasetManifest, Split


def _patient_unit(patient_id: str, seed: int) -> float:
    """Stable hash of (patient_id, seed) mapped into [0, 1)."""
    digest = hashlib.sha256(f"{patient_id}|{seed}".encode()).digest()
    return int.from_bytes(digest[:8], "big") / 2**64


def split_by_patient(
    manifest: DatasetManifest,
    fractions: tuple[float, float, float],
    seed: int,
) -> DatasetManifest:
    """Assign train/val/test tags as a function of patient_id alone.

    Hash-bucketing keeps every patient in exactly one split, and adding
    more samples for an existing patient can never move that patient.
    """
    if len(fractions) != 3 or any(f <= 0 for f in fractions):
        raise ValueError(f"fractions must be 3 positive values, got {fractions}")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"fractions must sum to 1, got sum={sum(fractions)}")
    patients = manifest.patient_ids()
    if len(patients) < 3:
        raise ValueError(f"need at least 3 distinct patients, got {len(patients)}")

    train_cut = fractions[0]
    val_cut = fractions[0] + fractions[1]

    def assign(pid: str) -> Split:
        u = _patient_unit(pid, seed)
        if u < train_cut:
            return Split.TRAIN
        if u < val_cut:
            return Split.VAL
        return Split.TEST

    samples = [s.with_split(assign(s.patient_id)) for s in manifest.samples]
    out = replace(manifest, samples=samples, seed=seed)
    out.validate()
    return out
