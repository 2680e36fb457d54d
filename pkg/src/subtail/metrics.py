"""Balanced classification metrics over confusion matrices.

Balanced precision corrects each false-positive count by the class-size
ratio of the evaluated split, so balanced and imbalanced test sets give
comparable numbers.
"""

from __future__ import annotations

import numpy as np

from subtail.core import ValidationError


def confusion_matrix(y_true: np.ndarray, y_pred: np.ndarray, num_classes: int) -> np.ndarray:
    """(K, K) counts; entry (j, k) = samples of true class j predicted as k."""
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape or y_true.ndim != 1:
        raise ValidationError("y_true and y_pred must be equal-length 1-D arrays")
    if y_true.size == 0:
        raise ValidationError("cannot build a confusion matrix from an empty split")
    for name, y in (("y_true", y_true), ("y_pred", y_pred)):
        if y.min() < 0 or y.max() >= num_classes:
            raise ValidationError(f"{name} contains labels outside [0, {num_classes})")
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(cm, (y_true, y_pred), 1)
    return cm


def _validated(cm: np.ndarray) -> np.ndarray:
    cm = np.asarray(cm)
    if cm.ndim != 2 or cm.shape[0] != cm.shape[1]:
        raise ValidationError("confusion matrix must be square")
    if np.any(cm < 0):
        raise ValidationError("confusion matrix entries must be non-negative")
    return cm.astype(np.float64)


def per_class_recall(cm: np.ndarray) -> np.ndarray:
    cm = _validated(cm)
    totals = cm.sum(axis=1)
    if np.any(totals == 0):
        empty = int(np.flatnonzero(totals == 0)[0])
        raise ValidationError(f"class {empty} has no samples in the evaluated split")
    return np.diag(cm) / totals


def balanced_accuracy(cm: np.ndarray) -> float:
    """Mean per-class recall."""
    return float(per_class_recall(cm).mean())


def balanced_precision(cm: np.ndarray, k: int) -> float:
    """Precision for class k with false positives scaled by n_j / n_k.

    Defined as 0 when nothing at all is predicted as k.
    """
    cm = _validated(cm)
    totals = cm.sum(axis=1)
    if totals[k] == 0:
        raise ValidationError(f"class {k} has no samples in the evaluated split")
    tp = cm[k, k]
    ratios = totals / totals[k]
    weighted_fp = float(np.sum(ratios * cm[:, k])) - ratios[k] * tp
    denom = tp + weighted_fp
    if denom == 0:
        return 0.0
    return float(tp / denom)


def balanced_f1(cm: np.ndarray) -> float:
    """Macro mean of the harmonic mean of recall and balanced precision."""
    cm = _validated(cm)
    recalls = per_class_recall(cm)
    total = 0.0
    for k in range(cm.shape[0]):
        bp = balanced_precision(cm, k)
        rec = recalls[k]
        if rec + bp > 0:
            total += 2.0 * rec * bp / (rec + bp)
    return total / cm.shape[0]
