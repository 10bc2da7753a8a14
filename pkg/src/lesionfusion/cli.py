"""Command-line entry point for the full pipeline.

Subcommands: synth, finetune-seg, segment, train, eval, gradcam. Exit code
0 on success, 1 on validation/configuration errors, 2 on runtime failure.
"""
from __future__ import annotations

import functools
import json
import os
import sys
from pathlib import Path

import click
import numpy as np
import torch
from PIL import Image

from .config import RunConfig
from .data import (
    Split,
    AugmentPolicy,
    generate_synthetic,
    ingest_directory,
    save_dataset,
    split_by_patient,
)
from .errors import CheckpointError, ConfigError, IngestError
from .evalkit import (
    classification_metrics,
    emit_report,
    grad_cam,
    roc_auc,
    save_heatmap_overlay,
)
from .fusion import AblationFlags
from .segmenter import (
    EncoderSpec,
    PromptSegmenter,
    Stage1Config,
    crop_lesion,
    dice_coefficient,
    finetune_segmenter,
    inject_adapters,
    load_segmenter,
    predict_mask,
    save_segmenter,
)
from .training import (
    TrainConfig,
    load_pipeline,
    predict_samples,
    train_stage2,
)

RUN_ROOT_ENV = "LESIONFUSION_RUN_ROOT"


def _resolve_out(path: str) -> Path:
    p = Path(path)
    root = os.environ.get(RUN_ROOT_ENV)
    if root and not p.is_absolute():
        return Path(root) / p
    return p


def _guard(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (ConfigError, IngestError, CheckpointError, ValueError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(1)
        except click.ClickException:
            raise
        except Exception as exc:  # noqa: BLE001 - runtime failures exit 2
            click.echo(f"runtime failure: {exc}", err=True)
            sys.exit(2)

    return wrapper


def _config_options(fn):
    fn = click.option("--config", "config_file", type=click.Path(exists=True), default=None,
                      help="YAML config file.")(fn)
    fn = click.option("--set", "sets", multiple=True, metavar="KEY=VALUE",
                      help="Dotted-path config override (wins over the file).")(fn)
    return fn


def _load_config(config_file, sets, extra: dict[str, object] | None = None) -> RunConfig:
    overrides: dict[str, object] = {}
    for item in sets:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        overrides[key] = value
    overrides.update(extra or {})
    cfg = RunConfig.load(config_file, overrides)
    click.echo(f"config digest: {cfg.digest()}")
    return cfg


def _write_config_snapshot(cfg: RunConfig, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.yaml").write_text(cfg.dump_yaml())
    (out / "config.provenance.txt").write_text(cfg.dump_provenance() + "\n")


def _build_segmenter(cfg: RunConfig):
    sec = cfg["lesion_locator"]
    spec = EncoderSpec(
        input_size=sec["input_size"],
        patch_size=sec["patch_size"],
        dim=sec["dim"],
        depth=sec["depth"],
        heads=sec["heads"],
    )
    torch.manual_seed(sec["seed"])
    model = PromptSegmenter(spec, init_seed=sec["init_seed"])
    return inject_adapters(model, rank=sec["rank"])


def _train_config(cfg: RunConfig, seed: int | None = None) -> TrainConfig:
    t = cfg["trainer"]
    g = cfg["fusion_gfo"]
    flags = AblationFlags(use_gfe=t["use_gfe"], use_lfe=t["use_lfe"], use_gfo=t["use_gfo"])
    policy = AugmentPolicy() if t["augment"] else AugmentPolicy.off()
    return TrainConfig(
        lr=t["lr"],
        momentum=t["momentum"],
        weight_decay=t["weight_decay"],
        batch_size=t["batch_size"],
        epochs=t["epochs"],
        lr_decay=t["lr_decay"],
        loss_weights=(g["alpha"], g["beta"], g["gamma"]),
        augment_policy=policy,
        ablation=flags,
        seed=t["seed"] if seed is None else seed,
        preset=cfg["extractors"]["preset"],
        image_size=t["image_size"],
        crop_fallback_size=t["crop_fallback_size"],
        crop_margin=t["crop_margin"],
        mask_source=t["mask_source"],
        adversarial_mode=g["adversarial_mode"],
    )


@click.group()
def main() -> None:
    """Dual-branch lesion classification pipeline."""


@main.command()
@click.option("--out", required=True, help="Dataset output directory.")
@click.option("--n", "n_per_class", type=int, default=None, help="Samples per class.")
@click.option("--size", type=int, default=None, help="Image size in pixels.")
@click.option("--seed", type=int, default=None)
@_config_options
@_guard
def synth(out, n_per_class, size, seed, config_file, sets):
    """Generate a synthetic dataset with patient-disjoint splits."""
    extra = {}
    if n_per_class is not None:
        extra["datahub.n_per_class"] = n_per_class
    if size is not None:
        extra["datahub.size"] = size
    if seed is not None:
        extra["datahub.seed"] = seed
        extra["datahub.split_seed"] = seed
    cfg = _load_config(config_file, sets, extra)
    d = cfg["datahub"]
    manifest = generate_synthetic(d["n_per_class"], d["size"], d["seed"])
    manifest = split_by_patient(manifest, tuple(d["fractions"]), d["split_seed"])
    out_dir = _resolve_out(out)
    save_dataset(manifest, out_dir)
    _write_config_snapshot(cfg, out_dir)
    click.echo(f"dataset digest: {manifest.digest()}")
    click.echo(f"wrote {len(manifest.samples)} samples to {out_dir}")


@main.command("finetune-seg")
@click.option("--data", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, help="Run directory.")
@click.option("--steps", type=int, default=None)
@_config_options
@_guard
def finetune_seg(data, out, steps, config_file, sets):
    """Stage 1: fine-tune the adapted segmenter on mask supervision."""
    extra = {"lesion_locator.steps": steps} if steps is not None else {}
    cfg = _load_config(config_file, sets, extra)
    sec = cfg["lesion_locator"]
    manifest = ingest_directory(Path(data))
    state = _build_segmenter(cfg)
    s1 = Stage1Config(
        steps=sec["steps"],
        batch_size=sec["batch_size"],
        lr=sec["lr"],
        warmup_steps=sec["warmup_steps"],
        dice_weight=sec["dice_weight"],
        ce_weight=sec["ce_weight"],
        seed=sec["seed"],
    )
    state, history = finetune_segmenter(state, manifest, s1)
    out_dir = _resolve_out(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_config_snapshot(cfg, out_dir)
    save_segmenter(state, out_dir / "segmenter.ckpt")
    (out_dir / "stage1_loss.jsonl").write_text(
        "".join(json.dumps({"step": i, "loss": l}) + "\n" for i, l in enumerate(history))
    )
    val = [s for s in manifest.subset(Split.VAL) if s.mask is not None]
    if val:
        dices = [
            dice_coefficient(predict_mask(state, s.image, sec["threshold"]).mask, s.mask)
            for s in val
        ]
        click.echo(f"val mean dice: {float(np.mean(dices)):.4f} over {len(val)} samples")
    click.echo(f"saved segmenter checkpoint to {out_dir / 'segmenter.ckpt'}")


@main.command()
@click.option("--data", required=True, type=click.Path(exists=True))
@click.option("--ckpt", required=True, type=click.Path(exists=True), help="Segmenter checkpoint.")
@click.option("--out", required=True)
@click.option("--split", "split_name", default="test")
@_config_options
@_guard
def segment(data, ckpt, out, split_name, config_file, sets):
    """Emit predicted masks and lesion crops for a dataset split."""
    cfg = _load_config(config_file, sets)
    sec = cfg["lesion_locator"]
    t = cfg["trainer"]
    manifest = ingest_directory(Path(data))
    state = load_segmenter(Path(ckpt))
    out_dir = _resolve_out(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    samples = manifest.subset(Split(split_name)) or manifest.samples
    for s in samples:
        lm = predict_mask(state, s.image, sec["threshold"])
        crop = crop_lesion(
            s.image, lm, fallback_size=t["crop_fallback_size"], margin=t["crop_margin"]
        )
        Image.fromarray((lm.mask * 255).astype(np.uint8)).save(out_dir / f"{s.name}_pred_mask.png")
        Image.fromarray(
            np.clip(np.rint(crop * 255.0), 0, 255).astype(np.uint8)
        ).save(out_dir / f"{s.name}_crop.png")
    click.echo(f"wrote masks and crops for {len(samples)} samples to {out_dir}")


@main.command()
@click.option("--data", required=True, type=click.Path(exists=True))
@click.option("--seg-ckpt", type=click.Path(exists=True), default=None)
@click.option("--out", required=True, help="Run directory.")
@click.option("--no-gfe", is_flag=True, help="Disable the global branch.")
@click.option("--no-lfe", is_flag=True, help="Disable the local branch.")
@click.option("--no-gfo", is_flag=True, help="Disable feature optimization.")
@click.option("--seed", type=int, default=None)
@click.option("--epochs", type=int, default=None)
@_config_options
@_guard
def train(data, seg_ckpt, out, no_gfe, no_lfe, no_gfo, seed, epochs, config_file, sets):
    """Stage 2: train the dual-branch classifier (segmenter frozen)."""
    extra: dict[str, object] = {}
    if no_gfe:
        extra["trainer.use_gfe"] = False
    if no_lfe:
        extra["trainer.use_lfe"] = False
    if no_gfo or no_gfe or no_lfe:
        extra["trainer.use_gfo"] = False
    if seed is not None:
        extra["trainer.seed"] = seed
    if epochs is not None:
        extra["trainer.epochs"] = epochs
    cfg = _load_config(config_file, sets, extra)
    tc = _train_config(cfg)
    manifest = ingest_directory(Path(data))
    segmenter = None
    if tc.ablation.use_lfe and tc.mask_source == "predicted":
        if seg_ckpt is None:
            raise ConfigError("--seg-ckpt required when the local branch uses predicted masks")
        segmenter = load_segmenter(Path(seg_ckpt))
    out_dir = _resolve_out(out)
    _write_config_snapshot(cfg, out_dir)
    result = train_stage2(manifest, segmenter, tc, run_dir=out_dir)
    last = result.history[-1]
    click.echo(
        f"finished {tc.epochs} epochs ({tc.ablation.variant}); "
        f"final train loss {last['train_loss']:.4f}, "
        f"best val macro-F1 {result.best_val_f1:.4f}"
    )


@main.command("eval")
@click.option("--data", required=True, type=click.Path(exists=True))
@click.option("--ckpt", required=True, type=click.Path(exists=True))
@click.option("--seg-ckpt", type=click.Path(exists=True), default=None)
@click.option("--out", required=True)
@click.option("--split", "split_name", default=None)
@_config_options
@_guard
def eval_cmd(data, ckpt, seg_ckpt, out, split_name, config_file, sets):
    """Evaluate a checkpoint on a dataset split and emit a report."""
    cfg = _load_config(config_file, sets)
    split = Split(split_name or cfg["evalkit"]["split"])
    manifest = ingest_directory(Path(data))
    model, tc, _meta = load_pipeline(Path(ckpt))
    segmenter = None
    if model.lfe is not None and tc.mask_source == "predicted":
        if seg_ckpt is None:
            raise ConfigError("--seg-ckpt required to evaluate the local branch")
        segmenter = load_segmenter(Path(seg_ckpt))
    samples = manifest.subset(split)
    if not samples:
        raise ValueError(f"no samples in split {split.value!r}")
    probs, labels = predict_samples(model, samples, tc, segmenter)
    dice_summary = None
    if segmenter is not None:
        per_class: dict[str, list[float]] = {}
        for s in samples:
            if s.mask is None:
                continue
            d = dice_coefficient(predict_mask(segmenter, s.image).mask, s.mask)
            per_class.setdefault(s.label.name.lower(), []).append(d)
        if per_class:
            dice_summary = {k: float(np.mean(v)) for k, v in per_class.items()}
    report = classification_metrics(probs, labels, dice_summary=dice_summary)
    curves = roc_auc(probs, labels)
    out_dir = _resolve_out(out)
    written = emit_report(report, out_dir, curves)
    click.echo(
        f"accuracy {report.accuracy:.4f}, macro F1 {report.macro_f1:.4f} "
        f"on {len(samples)} {split.value} samples"
    )
    click.echo(f"report written to {written[0]}")


@main.command()
@click.option("--data", required=True, type=click.Path(exists=True))
@click.option("--ckpt", required=True, type=click.Path(exists=True))
@click.option("--out", required=True)
@click.option("--names", default=None, help="Comma-separated sample names; default: tumor test samples.")
@_config_options
@_guard
def gradcam(data, ckpt, out, names, config_file, sets):
    """Write Grad-CAM heatmap overlays for selected images."""
    cfg = _load_config(config_file, sets)
    manifest = ingest_directory(Path(data))
    model, _tc, _meta = load_pipeline(Path(ckpt))
    if names:
        wanted = set(names.split(","))
        samples = [s for s in manifest.samples if s.name in wanted]
        missing = wanted - {s.name for s in samples}
        if missing:
            raise ValueError(f"samples not found: {sorted(missing)}")
    else:
        limit = cfg["evalkit"]["gradcam_limit"]
        samples = [s for s in manifest.subset(Split.TEST) if s.label != 0][:limit]
    if not samples:
        raise ValueError("no samples selected for visualization")
    out_dir = _resolve_out(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    branch = "global" if model.gfe is not None else "local"
    for s in samples:
        heatmap = grad_cam(model, s.image, int(s.label), branch=branch)
        save_heatmap_overlay(s.image, heatmap, out_dir / f"{s.name}_cam.png")
    click.echo(f"wrote {len(samples)} heatmaps to {out_dir}")


if __name__ == "__main__":
    main()
