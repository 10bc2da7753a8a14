"""Dataset directory layout: read (ingest) and write.

Layout::

    root/
      metadata.csv          # filename,patient_id,modality,label
      manifest.json         # counts, seed, split tags (written by us)
      normal/ benign/ malignant/
        <name>.png          # image
        <name>_mask.png     # optional ground-truth mask, values {0, 255}
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np
from PIL import Image

from ..errors import IngestError
from .types import DatasetManifest, ImageSample, Label, Modality, Split

_CLASS_DIRS = {lbl.name.lower(): lbl for lbl in Label}


def save_dataset(manifest: DatasetManifest, root: Path) -> None:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    rows = []
    for s in manifest.samples:
        cls_dir = root / s.label.name.lower()
        cls_dir.mkdir(exist_ok=True)
        img8 = np.clip(np.rint(s.image * 255.0), 0, 255).astype(np.uint8)
        Image.fromarray(img8).save(cls_dir / f"{s.name}.png")
        if s.mask is not None:
            Image.fromarray((s.mask * 255).astype(np.uint8)).save(cls_dir / f"{s.name}_mask.png")
        rows.append((f"{s.name}.png", s.patient_id, s.modality.value, s.label.name.lower()))
    with open(root / "metadata.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["filename", "patient_id", "modality", "label"])
        w.writerows(rows)
    save_manifest(manifest, root / "manifest.json")


def save_manifest(manifest: DatasetManifest, path: Path) -> None:
    payload = {
        "seed": manifest.seed,
        "class_counts": manifest.class_counts,
        "digest": manifest.digest(),
        "samples": [
            {
                "name": s.name,
                "label": s.label.name.lower(),
                "modality": s.modality.value,
                "patient_id": s.patient_id,
                "split": s.split.value if s.split is not None else None,
                "has_mask": s.mask is not None,
            }
            for s in manifest.samples
        ],
        "validation_errors": manifest.validation_errors,
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")


def _load_image(path: Path) -> np.ndarray:
    arr = np.asarray(Image.open(path).convert("RGB"), dtype=np.float32) / 255.0
    return arr


def _load_mask(path: Path) -> np.ndarray:
    arr = np.asarray(Image.open(path).convert("L"), dtype=np.uint8)
    return (arr >= 128).astype(np.uint8)


def ingest_directory(root: Path, seed: int = 0) -> DatasetManifest:
    """Build a validated manifest from a dataset directory.

    Unreadable or mis-sized files are collected in ``validation_errors``;
    a missing metadata file or an empty directory is fatal.
    """
    root = Path(root)
    meta_path = root / "metadata.csv"
    if not meta_path.exists():
        raise IngestError(f"metadata file not found: {meta_path}")
    meta: dict[str, dict[str, str]] = {}
    with open(meta_path, newline="") as f:
        for row in csv.DictReader(f):
            meta[row["filename"]] = row

    splits: dict[str, Split] = {}
    manifest_path = root / "manifest.json"
    if manifest_path.exists():
        stored = json.loads(manifest_path.read_text())
        for rec in stored.get("samples", []):
            if rec.get("split"):
                splits[rec["name"]] = Split(rec["split"])

    samples: list[ImageSample] = []
    errors: list[str] = []
    for dirname, label in _CLASS_DIRS.items():
        cls_dir = root / dirname
        if not cls_dir.is_dir():
            continue
        for img_path in sorted(cls_dir.glob("*.png")):
            if img_path.stem.endswith("_mask"):
                continue
            rec = meta.get(img_path.name)
            if rec is None:
                errors.append(f"{img_path.name}: not listed in metadata.csv")
                continue
            try:
                image = _load_image(img_path)
            except OSError as exc:
                errors.append(f"{img_path.name}: unreadable ({exc})")
                continue
            mask = None
            mask_path = cls_dir / f"{img_path.stem}_mask.png"
            if mask_path.exists():
                mask = _load_mask(mask_path)
                if mask.shape != image.shape[:2]:
                    errors.append(
                        f"{img_path.name}: mask size {mask.shape} != image {image.shape[:2]}"
                    )
                    continue
            sample = ImageSample(
                name=img_path.stem,
                image=image,
                label=label,
                modality=Modality(rec["modality"]),
                patient_id=rec["patient_id"],
                mask=mask,
                split=splits.get(img_path.stem),
            )
            try:
                sample.validate()
            except ValueError as exc:
                errors.append(str(exc))
                continue
            samples.append(sample)

    if not samples:
        raise IngestError(f"no samples found under {root}")
    manifest = DatasetManifest(samples=samples, seed=seed, validation_errors=errors)
    manifest.validate()
    return manifest
