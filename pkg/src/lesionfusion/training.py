"""Stage-2 training: dual-branch classifier over whole images and lesion crops.

The stage-1 segmenter is frozen here; its predicted masks (or ground-truth
masks, per config) drive the lesion crops fed to the local branch.
"""
from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .branches import FeatureExtractor
from .data.augment import AugmentPolicy, augment
from .data.types import DatasetManifest, ImageSample, Split
from .errors import CheckpointError, ConfigError
from .fusion import (
    DEFAULT_LOSS_WEIGHTS,
    AblationFlags,
    ClassificationHeads,
    FeatureDiscriminator,
    PredictionTriple,
    total_loss,
)
from .segmenter import SegmenterState, crop_lesion, predict_mask

CHECKPOINT_SCHEMA_VERSION = 1


@dataclass
class TrainConfig:
    lr: float = 0.003
    momentum: float = 0.9
    weight_decay: float = 5e-4
    batch_size: int = 256
    epochs: int = 60
    lr_decay: float = 0.965
    loss_weights: tuple[float, float, float] = DEFAULT_LOSS_WEIGHTS
    augment_policy: AugmentPolicy = field(default_factory=AugmentPolicy)
    ablation: AblationFlags = field(default_factory=AblationFlags)
    seed: int = 0
    preset: str = "resnet50"
    image_size: int = 224
    crop_fallback_size: int = 256
    crop_margin: int = 8
    mask_source: str = "predicted"  # or "ground_truth"
    # detached: the discriminator trains on detached features and alignment
    # is carried by the similarity loss; both gradient-coupled schedules
    # ("joint" co-minimization and "grad_reverse" min-max) can starve the
    # from-scratch global branch on small datasets.
    adversarial_mode: str = "detached"

    def validate(self) -> None:
        if self.lr <= 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if not (0 < self.lr_decay <= 1):
            raise ConfigError(f"lr_decay must be in (0, 1], got {self.lr_decay}")
        if self.mask_source not in ("predicted", "ground_truth"):
            raise ConfigError(f"unknown mask_source {self.mask_source!r}")
        self.ablation.validate()

    @classmethod
    def desk_scale(cls, **overrides) -> "TrainConfig":
        """Workstation profile: small preset, small images, short schedule.

        Augmentation defaults off here: at this scale color jitter washes out
        the class signal and the short schedule cannot absorb it.
        """
        base = dict(
            batch_size=8,
            epochs=30,
            preset="tiny",
            image_size=128,
            augment_policy=AugmentPolicy.off(),
        )
        base.update(overrides)
        return cls(**base)


def lr_at_epoch(cfg: TrainConfig, epoch: int) -> float:
    """Per-epoch exponential decay: lr * decay^epoch."""
    if epoch < 0:
        raise ValueError(f"epoch must be >= 0, got {epoch}")
    return cfg.lr * cfg.lr_decay**epoch


class DualBranchModel(nn.Module):
    """Enabled branch extractors + classification heads + discriminator."""

    def __init__(self, cfg: TrainConfig):
        super().__init__()
        cfg.validate()
        self.flags = cfg.ablation
        self.preset = cfg.preset
        self.gfe = FeatureExtractor(cfg.preset) if self.flags.use_gfe else None
        self.lfe = FeatureExtractor(cfg.preset) if self.flags.use_lfe else None
        dim = (self.gfe or self.lfe).feature_dim
        self.feature_dim = dim
        self.heads = ClassificationHeads(dim, self.flags)
        self.discriminator = FeatureDiscriminator(dim) if self.flags.use_gfo else None

    def forward(self, x_global: torch.Tensor | None, x_local: torch.Tensor | None):
        f_g = self.gfe(x_global) if self.gfe is not None else None
        f_l = self.lfe(x_local) if self.lfe is not None else None
        preds = self.heads(f_g, f_l)
        return preds, f_g, f_l


def _to_tensor(image: np.ndarray) -> torch.Tensor:
    return torch.from_numpy(np.ascontiguousarray(image.transpose(2, 0, 1))).float()


def _resize(x: torch.Tensor, size: int) -> torch.Tensor:
    if x.shape[-2:] == (size, size):
        return x
    return F.interpolate(x, size=(size, size), mode="bilinear", align_corners=False)


def effective_mask(
    sample: ImageSample,
    segmenter: SegmenterState | None,
    mask_source: str,
) -> np.ndarray:
    """Mask used for lesion cropping, per the configured source."""
    if mask_source == "ground_truth":
        if sample.mask is not None:
            return sample.mask
        return np.zeros(sample.image.shape[:2], dtype=np.uint8)
    if segmenter is None:
        raise ConfigError("mask_source='predicted' requires a segmenter state")
    return predict_mask(segmenter, sample.image).mask


def local_input(
    image: np.ndarray,
    mask: np.ndarray,
    cfg: TrainConfig,
) -> torch.Tensor:
    crop = crop_lesion(image, mask, fallback_size=cfg.crop_fallback_size, margin=cfg.crop_margin)
    return _resize(_to_tensor(crop)[None], cfg.image_size)[0]


def _batch_tensors(
    samples: list[ImageSample],
    masks: list[np.ndarray],
    cfg: TrainConfig,
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    xg = torch.stack([_resize(_to_tensor(s.image)[None], cfg.image_size)[0] for s in samples])
    xl = torch.stack([local_input(s.image, m, cfg) for s, m in zip(samples, masks)])
    labels = torch.tensor([int(s.label) for s in samples], dtype=torch.long)
    return xg, xl, labels


@torch.no_grad()
def predict_samples(
    model: DualBranchModel,
    samples: list[ImageSample],
    cfg: TrainConfig,
    segmenter: SegmenterState | None,
    batch_size: int = 32,
) -> tuple[np.ndarray, np.ndarray]:
    """Ensemble class probabilities and labels for a list of samples."""
    model.eval()
    probs = []
    labels = []
    for start in range(0, len(samples), batch_size):
        chunk = samples[start : start + batch_size]
        if model.lfe is not None:
            masks = [effective_mask(s, segmenter, cfg.mask_source) for s in chunk]
        else:
            masks = [np.zeros(s.image.shape[:2], dtype=np.uint8) for s in chunk]
        xg, xl, yb = _batch_tensors(chunk, masks, cfg)
        preds, _, _ = model(xg if model.gfe is not None else None,
                            xl if model.lfe is not None else None)
        probs.append(preds.ensemble.numpy())
        labels.append(yb.numpy())
    return np.concatenate(probs), np.concatenate(labels)


def _param_groups(model: nn.Module, weight_decay: float):
    decay, no_decay = [], []
    for name, p in model.named_parameters():
        if not p.requires_grad:
            continue
        if p.ndim <= 1 or name.endswith(".bias"):
            no_decay.append(p)
        else:
            decay.append(p)
    return [
        {"params": decay, "weight_decay": weight_decay},
        {"params": no_decay, "weight_decay": 0.0},
    ]


def _macro_f1(probs: np.ndarray, labels: np.ndarray) -> float:
    pred = probs.argmax(axis=1)
    f1s = []
    for c in range(probs.shape[1]):
        tp = int(((pred == c) & (labels == c)).sum())
        fp = int(((pred == c) & (labels != c)).sum())
        fn = int(((pred != c) & (labels == c)).sum())
        if (labels == c).sum() == 0:
            continue
        denom = 2 * tp + fp + fn
        f1s.append(2 * tp / denom if denom else 0.0)
    return float(np.mean(f1s)) if f1s else 0.0


@dataclass
class Stage2Result:
    model: DualBranchModel
    cfg: TrainConfig
    history: list[dict]
    best_checkpoint: Path | None
    best_val_f1: float


def train_stage2(
    manifest: DatasetManifest,
    segmenter: SegmenterState | None,
    cfg: TrainConfig,
    run_dir: Path | None = None,
) -> Stage2Result:
    """Train the dual-branch classifier with the segmenter frozen.

    Predicted masks are computed once per sample on the raw image and the
    training augmentation transforms them jointly with the image, so the
    local crop tracks the augmented geometry without re-running the
    segmenter every step.
    """
    cfg.validate()
    if cfg.ablation.use_lfe and cfg.mask_source == "predicted" and segmenter is None:
        raise ConfigError("local branch with predicted masks requires a stage-1 segmenter")
    torch.manual_seed(cfg.seed)
    np.random.seed(cfg.seed)

    train = manifest.subset(Split.TRAIN)
    val = manifest.subset(Split.VAL)
    if not train:
        raise ConfigError("manifest has no train split")

    seg_checksum = segmenter.frozen_checksum() if segmenter is not None else None

    base_masks = None
    if cfg.ablation.use_lfe:
        base_masks = {
            s.name: effective_mask(s, segmenter, cfg.mask_source) for s in train
        }

    model = DualBranchModel(cfg)
    opt = torch.optim.SGD(
        _param_groups(model, cfg.weight_decay),
        lr=cfg.lr,
        momentum=cfg.momentum,
    )

    if run_dir is not None:
        run_dir = Path(run_dir)
        run_dir.mkdir(parents=True, exist_ok=True)
        metrics_file = open(run_dir / "metrics.jsonl", "w")
    else:
        metrics_file = None

    history: list[dict] = []
    best_f1 = -1.0
    best_path = run_dir / "best.ckpt" if run_dir is not None else None

    n = len(train)
    for epoch in range(cfg.epochs):
        lr = lr_at_epoch(cfg, epoch)
        for group in opt.param_groups:
            group["lr"] = lr
        order_rng = np.random.default_rng([cfg.seed, epoch])
        order = order_rng.permutation(n)
        model.train()
        epoch_losses = []
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            batch = []
            masks = []
            for j in idx:
                s = train[j]
                m = base_masks[s.name] if base_masks is not None else np.zeros(
                    s.image.shape[:2], dtype=np.uint8
                )
                work = replace(s, mask=m)
                aug = augment(work, cfg.augment_policy, seed=int(order_rng.integers(2**31)))
                batch.append(aug)
                masks.append(aug.mask if aug.mask is not None else m)
            xg, xl, labels = _batch_tensors(batch, masks, cfg)
            preds, f_g, f_l = model(xg if model.gfe is not None else None,
                                    xl if model.lfe is not None else None)
            bundle = total_loss(
                preds,
                labels,
                f_g,
                f_l,
                model.discriminator,
                weights=cfg.loss_weights,
                flags=cfg.ablation,
                adversarial_mode=cfg.adversarial_mode,
            )
            opt.zero_grad()
            bundle.l_total.backward()
            opt.step()
            epoch_losses.append(bundle.scalars())

        record = {
            "epoch": epoch,
            "lr": lr,
            "train_loss": float(np.mean([e["l_total"] for e in epoch_losses])),
        }
        record.update(
            {k: float(np.mean([e[k] for e in epoch_losses])) for k in epoch_losses[0]}
        )
        if val:
            probs, labels = predict_samples(model, val, cfg, segmenter)
            record["val_accuracy"] = float((probs.argmax(1) == labels).mean())
            record["val_macro_f1"] = _macro_f1(probs, labels)
            if best_path is not None and record["val_macro_f1"] >= best_f1:
                best_f1 = record["val_macro_f1"]
                save_pipeline(model, cfg, best_path, epoch=epoch, history=history + [record])
        history.append(record)
        if metrics_file is not None:
            metrics_file.write(json.dumps(record) + "\n")
            metrics_file.flush()

    if metrics_file is not None:
        metrics_file.close()
    if run_dir is not None:
        save_pipeline(model, cfg, run_dir / "last.ckpt", epoch=cfg.epochs - 1, history=history)

    if seg_checksum is not None and segmenter.frozen_checksum() != seg_checksum:
        raise RuntimeError("stage-2 training mutated the frozen segmenter")

    return Stage2Result(
        model=model,
        cfg=cfg,
        history=history,
        best_checkpoint=best_path if best_f1 >= 0 else None,
        best_val_f1=best_f1,
    )


def save_pipeline(
    model: DualBranchModel,
    cfg: TrainConfig,
    path: Path,
    epoch: int = 0,
    history: list[dict] | None = None,
) -> None:
    payload = {
        "schema_version": CHECKPOINT_SCHEMA_VERSION,
        "kind": "pipeline",
        "preset": cfg.preset,
        "feature_dim": model.feature_dim,
        "image_size": cfg.image_size,
        "flags": {
            "use_gfe": cfg.ablation.use_gfe,
            "use_lfe": cfg.ablation.use_lfe,
            "use_gfo": cfg.ablation.use_gfo,
        },
        "loss_weights": list(cfg.loss_weights),
        "epoch": epoch,
        "history": history or [],
        "sections": {
            "gfe": model.gfe.state_dict() if model.gfe is not None else None,
            "lfe": model.lfe.state_dict() if model.lfe is not None else None,
            "heads": model.heads.state_dict(),
            "discriminator": (
                model.discriminator.state_dict() if model.discriminator is not None else None
            ),
        },
        "config": {
            k: (list(v) if isinstance(v, tuple) else v)
            for k, v in vars(cfg).items()
            if isinstance(v, (int, float, str, bool, tuple))
        },
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            torch.save(payload, f)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_pipeline(
    path: Path,
    expect_flags: AblationFlags | None = None,
) -> tuple[DualBranchModel, TrainConfig, dict]:
    try:
        payload = torch.load(path, map_location="cpu", weights_only=False)
    except Exception as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("kind") != "pipeline":
        raise CheckpointError(f"{path} is not a pipeline checkpoint")
    if payload.get("schema_version") != CHECKPOINT_SCHEMA_VERSION:
        raise CheckpointError(
            f"checkpoint schema {payload.get('schema_version')} "
            f"incompatible with {CHECKPOINT_SCHEMA_VERSION}"
        )
    flags = AblationFlags(**payload["flags"])
    if expect_flags is not None and vars(expect_flags) != vars(flags):
        raise CheckpointError(
            f"topology mismatch: checkpoint is {flags.variant}, "
            f"requested {expect_flags.variant}"
        )
    cfg_dict = dict(payload["config"])
    cfg_dict["loss_weights"] = tuple(payload["loss_weights"])
    cfg = TrainConfig(**{**cfg_dict, "ablation": flags})
    model = DualBranchModel(cfg)
    sections = payload["sections"]
    if model.gfe is not None:
        model.gfe.load_state_dict(sections["gfe"])
    if model.lfe is not None:
        model.lfe.load_state_dict(sections["lfe"])
    model.heads.load_state_dict(sections["heads"])
    if model.discriminator is not None:
        model.discriminator.load_state_dict(sections["discriminator"])
    model.eval()
    return model, cfg, {"epoch": payload["epoch"], "history": payload["history"]}
