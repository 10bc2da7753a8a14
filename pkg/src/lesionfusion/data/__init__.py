from .augment import AugmentPolicy, augment
from .io import ingest_directory, save_dataset, save_manifest
from .split import split_by_patient
from .synthetic import generate_synthetic
from .types import DatasetManifest, ImageSample, Label, Modality, Split

__all__ = [
    "AugmentPolicy",
    "augment",
    "ingest_directory",
    "save_dataset",
    "save_manifest",
    "split_by_patient",
    "generate_synthetic",
    "DatasetManifest",
    "ImageSample",
    "Label",
    "Modality",
    "Split",
]
