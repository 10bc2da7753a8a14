"""Run configuration: defaults, YAML file, and flag overrides with provenance.

Sections mirror the module layout. Every consumed key records where its
value came from (default, file, or flag); unknown keys are rejected so a
typo cannot silently fall back to a default.
"""
from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path

import yaml

from .errors import ConfigError

DEFAULTS: dict = {
    "datahub": {
        "n_per_class": 60,
        "size": 128,
        "seed": 7,
        "fractions": [0.7, 0.15, 0.15],
        "split_seed": 7,
    },
    "lesion_locator": {
        "rank": 4,
        "input_size": 128,
        "patch_size": 8,
        "dim": 96,
        "depth": 4,
        "heads": 4,
        "init_seed": 1,
        "steps": 300,
        "batch_size": 8,
        "lr": 0.004,
        "warmup_steps": 20,
        "dice_weight": 0.9,
        "ce_weight": 0.1,
        "seed": 0,
        "threshold": 0.5,
    },
    "extractors": {
        "preset": "tiny",
    },
    "fusion_gfo": {
        "alpha": 1.0,
        "beta": 0.3,
        "gamma": 0.01,
        "adversarial_mode": "detached",
    },
    "trainer": {
        "lr": 0.003,
        "momentum": 0.9,
        "weight_decay": 5.0e-4,
        "batch_size": 8,
        "epochs": 30,
        "lr_decay": 0.965,
        "image_size": 128,
        "seed": 0,
        "use_gfe": True,
        "use_lfe": True,
        "use_gfo": True,
        "mask_source": "predicted",
        "augment": False,
        "crop_fallback_size": 256,
        "crop_margin": 8,
    },
    "evalkit": {
        "split": "test",
        "gradcam_limit": 8,
    },
}


class RunConfig:
    def __init__(self, values: dict, provenance: dict[str, str]):
        self.values = values
        self.provenance = provenance

    @classmethod
    def load(
        cls,
        config_file: Path | None = None,
        overrides: dict[str, object] | None = None,
    ) -> "RunConfig":
        values = copy.deepcopy(DEFAULTS)
        provenance = {
            f"{sec}.{key}": "default" for sec, keys in DEFAULTS.items() for key in keys
        }
        if config_file is not None:
            raw = yaml.safe_load(Path(config_file).read_text()) or {}
            if not isinstance(raw, dict):
                raise ConfigError(f"config file {config_file} must be a mapping")
            for sec, keys in raw.items():
                if sec not in values:
                    raise ConfigError(f"unknown config section {sec!r}")
                if not isinstance(keys, dict):
                    raise ConfigError(f"section {sec!r} must be a mapping")
                for key, val in keys.items():
                    if key not in values[sec]:
                        raise ConfigError(f"unknown config key {sec}.{key}")
                    values[sec][key] = val
                    provenance[f"{sec}.{key}"] = "file"
        for dotted, val in (overrides or {}).items():
            sec, _, key = dotted.partition(".")
            if sec not in values or key not in values[sec]:
                raise ConfigError(f"unknown config key {dotted!r}")
            if isinstance(val, str):
                val = yaml.safe_load(val)
                if isinstance(val, str):
                    # YAML 1.1 misses bare scientific notation like "1e-3"
                    try:
                        val = float(val)
                    except ValueError:
                        pass
            values[sec][key] = val
            provenance[dotted] = "flag"
        return cls(values, provenance)

    def __getitem__(self, section: str) -> dict:
        return self.values[section]

    def digest(self) -> str:
        canon = json.dumps(self.values, sort_keys=True)
        return hashlib.sha256(canon.encode()).hexdigest()[:16]

    def dump_yaml(self) -> str:
        """Resolved values; feeding this back as a config file reproduces the run."""
        return yaml.safe_dump(self.values, sort_keys=True)

    def dump_provenance(self) -> str:
        lines = [f"{k}: {v}" for k, v in sorted(self.provenance.items())]
        return "\n".join(lines)
