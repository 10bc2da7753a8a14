"""Classification metrics: confusion, macro P/R/F1, per-class recall, ROC/AUC."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

NUM_CLASSES = 3
CLASS_NAMES = ("normal", "benign", "malignant")


@dataclass
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    auc: float | None


@dataclass
class EvalReport:
    accuracy: float
    macro_precision: float
    macro_recall: float
    macro_f1: float
    per_class_recall: list[float | None]
    confusion: list[list[int]]
    auc: list[float | None]
    dice_summary: dict[str, float] | None = None
    absent_classes: list[int] = field(default_factory=list)
    averaging: str = "macro"
    schema_version: int = 1


def confusion_matrix(pred: np.ndarray, labels: np.ndarray) -> np.ndarray:
    cm = np.zeros((NUM_CLASSES, NUM_CLASSES), dtype=np.int64)
    for t, p in zip(labels, pred):
        cm[int(t), int(p)] += 1
    return cm


def roc_auc(scores: np.ndarray, labels: np.ndarray) -> list[RocCurve]:
    """One-vs-rest ROC per class by threshold sweep; AUC via trapezoid rule.

    A class with no positives or no negatives gets ``auc=None``.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.ndim != 2 or scores.shape[1] != NUM_CLASSES:
        raise ValueError(f"scores must be (N, {NUM_CLASSES}), got {scores.shape}")
    curves = []
    for c in range(NUM_CLASSES):
        pos = labels == c
        neg = ~pos
        n_pos = int(pos.sum())
        n_neg = int(neg.sum())
        if n_pos == 0 or n_neg == 0:
            curves.append(RocCurve(fpr=np.array([0.0, 1.0]), tpr=np.array([0.0, 1.0]), auc=None))
            continue
        s = scores[:, c]
        thresholds = np.concatenate([[np.inf], np.unique(s)[::-1]])
        fpr = np.empty(len(thresholds) + 1)
        tpr = np.empty(len(thresholds) + 1)
        for i, t in enumerate(thresholds):
            predicted_pos = s >= t
            tpr[i] = (predicted_pos & pos).sum() / n_pos
            fpr[i] = (predicted_pos & neg).sum() / n_neg
        fpr[-1] = 1.0
        tpr[-1] = 1.0
        auc = float(np.trapezoid(tpr, fpr))
        curves.append(RocCurve(fpr=fpr, tpr=tpr, auc=auc))
    return curves


def classification_metrics(
    probs: np.ndarray,
    labels: np.ndarray,
    dice_summary: dict[str, float] | None = None,
) -> EvalReport:
    """Metrics from ensemble probabilities; macro averages over present classes.

    Classes absent from ``labels`` have undefined recall, are reported as
    ``None``, excluded from the macro means, and flagged in the report.
    """
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels)
    if len(labels) == 0:
        raise ValueError("empty batch")
    pred = probs.argmax(axis=1)
    cm = confusion_matrix(pred, labels)
    total = int(cm.sum())
    accuracy = float(np.trace(cm)) / total

    recalls: list[float | None] = []
    precisions = []
    f1s = []
    absent = []
    for c in range(NUM_CLASSES):
        support = int(cm[c].sum())
        tp = int(cm[c, c])
        fp = int(cm[:, c].sum()) - tp
        fn = support - tp
        if support == 0:
            recalls.append(None)
            absent.append(c)
            continue
        rec = tp / support
        prec = tp / (tp + fp) if (tp + fp) > 0 else 0.0
        f1 = 2 * tp / (2 * tp + fp + fn) if (2 * tp + fp + fn) > 0 else 0.0
        recalls.append(rec)
        precisions.append(prec)
        f1s.append(f1)

    present_recalls = [r for r in recalls if r is not None]
    curves = roc_auc(probs, labels)
    return EvalReport(
        accuracy=accuracy,
        macro_precision=float(np.mean(precisions)),
        macro_recall=float(np.mean(present_recalls)),
        macro_f1=float(np.mean(f1s)),
        per_class_recall=recalls,
        confusion=cm.tolist(),
        auc=[c.auc for c in curves],
        dice_summary=dice_summary,
        absent_classes=absent,
    )
