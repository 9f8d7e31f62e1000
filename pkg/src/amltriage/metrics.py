"""Recall at a fixed false-positive rate over alerted rows."""
from __future__ import annotations

import numpy as np


def _check(scores, labels):
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels).astype(bool)
    if scores.shape != labels.shape:
        raise ValueError("scores and labels differ in shape")
    if labels.all() or not labels.any():
        raise ValueError("recall at FPR needs at least one positive and one negative")
    return scores, labels


def roc_points(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    """(FPR, recall) at every distinct-score threshold, starting from 'predict none'.

    Rows with equal scores are always classified together.
    """
    scores, labels = _check(scores, labels)
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    y = labels[order]
    ends = np.r_[np.flatnonzero(np.diff(s) != 0), len(s) - 1]
    tp = np.cumsum(y)[ends]
    fp = np.cumsum(~y)[ends]
    fpr = np.r_[0.0, fp / (~labels).sum()]
    recall = np.r_[0.0, tp / labels.sum()]
    return fpr, recall


def recall_at_fpr(scores, labels, target_fpr: float = 0.20) -> float:
    """Best recall among thresholds whose FPR does not exceed ``target_fpr``."""
    fpr, recall = roc_points(scores, labels)
    ok = fpr <= target_fpr
    return float(recall[ok].max())


def recall_curve(scores, labels, fpr_grid) -> np.ndarray:
    fpr, recall = roc_points(scores, labels)
    # recall is non-decreasing along the ROC, so the best point is the last admissible one
    idx = np.searchsorted(fpr, np.asarray(fpr_grid, dtype=float), side="right") - 1
    return recall[idx]
