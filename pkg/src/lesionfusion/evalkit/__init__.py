from .gradcam import grad_cam
from .metrics import (
    CLASS_NAMES,
    NUM_CLASSES,
    EvalReport,
    RocCurve,
    classification_metrics,
    confusion_matrix,
    roc_auc,
)
from .report import emit_report, parse_report, save_heatmap_overlay

__all__ = [
    "grad_cam",
    "CLASS_NAMES",
    "NUM_CLASSES",
    "EvalReport",
    "RocCurve",
    "classification_metrics",
    "confusion_matrix",
    "roc_auc",
    "emit_report",
    "parse_report",
    "save_heatmap_overlay",
]
