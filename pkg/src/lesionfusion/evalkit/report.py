"""Evaluation report emission: machine-readable JSON plus ROC plot images."""
from __future__ import annotations

import json
from dataclasses import asdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .metrics import CLASS_NAMES, EvalReport, RocCurve

REPORT_FILENAME = "report.json"


def emit_report(
    report: EvalReport,
    out_dir: Path,
    curves: list[RocCurve] | None = None,
) -> list[Path]:
    """Write report.json and one ROC plot per class; returns written paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = asdict(report)
    if payload.get("dice_summary") is None:
        payload.pop("dice_summary", None)
    report_path = out_dir / REPORT_FILENAME
    report_path.write_text(json.dumps(payload, indent=2) + "\n")
    written = [report_path]
    if curves is not None:
        for name, curve in zip(CLASS_NAMES, curves):
            fig, ax = plt.subplots(figsize=(4, 4))
            ax.plot(curve.fpr, curve.tpr, color="crimson")
            ax.plot([0, 1], [0, 1], linestyle="--", color="gray", linewidth=0.8)
            auc_txt = "n/a" if curve.auc is None else f"{curve.auc:.3f}"
            ax.set_title(f"ROC {name} (AUC={auc_txt})")
            ax.set_xlabel("false positive rate")
            ax.set_ylabel("true positive rate")
            fig.tight_layout()
            path = out_dir / f"roc_{name}.png"
            fig.savefig(path, dpi=100)
            plt.close(fig)
            written.append(path)
    return written


def parse_report(out_dir: Path) -> EvalReport:
    payload = json.loads((Path(out_dir) / REPORT_FILENAME).read_text())
    payload.setdefault("dice_summary", None)
    return EvalReport(**payload)


def save_heatmap_overlay(image: np.ndarray, heatmap: np.ndarray, path: Path) -> None:
    fig, ax = plt.subplots(figsize=(4, 4))
    ax.imshow(image)
    ax.imshow(heatmap, cmap="jet", alpha=0.4, vmin=0.0, vmax=1.0)
    ax.axis("off")
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
