"""WA/WF1 metrics over confusion counts.

WA is balanced accuracy (mean per-class recall over classes present in the
truth); the SER literature uses "weighted accuracy" both for this and for
plain accuracy, so plain accuracy is available behind a flag.  WF1 is the
support-weighted mean of per-class F1.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError


def confusion_matrix(preds, truth, n_classes: int) -> np.ndarray:
    preds = np.asarray(preds)
    truth = np.asarray(truth)
    if preds.shape != truth.shape:
        raise ShapeError(f"preds shape {preds.shape} != truth shape {truth.shape}")
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (truth, preds), 1)
    return cm


def weighted_metrics(preds, truth, n_classes: int,
                     balanced: bool = True) -> tuple[float, float]:
    """Returns (WA, WF1) from label vectors."""
    preds = np.asarray(preds)
    truth = np.asarray(truth)
    if preds.shape != truth.shape or preds.size == 0:
        raise ShapeError(f"bad label vectors: {preds.shape} vs {truth.shape}")
    cm = confusion_matrix(preds, truth, n_classes)
    support = cm.sum(axis=1)
    predicted = cm.sum(axis=0)
    correct = np.diag(cm)
    present = support > 0
    if balanced:
        recall = np.where(present, correct / np.maximum(support, 1), 0.0)
        wa = recall[present].mean()
    else:
        wa = correct.sum() / preds.size
    f1 = np.zeros(n_classes)
    denom = support + predicted
    nonzero = denom > 0
    f1[nonzero] = 2.0 * correct[nonzero] / denom[nonzero]
    wf1 = float((support / preds.size) @ f1)
    return float(wa), wf1


def plain_accuracy(preds, truth) -> float:
    preds = np.asarray(preds)
    truth = np.asarray(truth)
    if preds.shape != truth.shape or preds.size == 0:
        raise ShapeError(f"bad label vectors: {preds.shape} vs {truth.shape}")
    return float((preds == truth).mean())
