"""Ranking metrics: ROC curves, trapezoidal AUC, TPR at a fixed FPR.

The trapezoidal AUC over the threshold-swept curve equals the tie-adjusted
pairwise concordance probability (ties count 1/2), which is what the test
suite's brute-force oracle computes.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_trapezoid = getattr(np, "trapezoid", None) or np.trapz


class DegenerateLabels(ValueError):
    """AUC needs at least one positive and one negative label."""


@dataclass
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray  # score >= threshold predicts positive


def roc_and_auc(scores, labels) -> tuple[RocCurve, float]:
    """Sweep every distinct score as a threshold; AUC by the trapezoid rule.

    The curve starts at (0, 0) with threshold +inf and ends at (1, 1).
    """
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be equal-length vectors")
    pos = int(np.sum(labels == 1))
    neg = int(np.sum(labels == 0))
    if pos + neg != len(labels):
        raise ValueError("labels must be 0/1")
    if pos == 0 or neg == 0:
        raise DegenerateLabels(f"{pos} positives, {neg} negatives")

    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_labels = labels[order]

    # Emit one curve point after consuming each run of tied scores.
    distinct = np.nonzero(np.diff(sorted_scores))[0]
    cut = np.concatenate([distinct, [len(scores) - 1]])
    tp = np.cumsum(sorted_labels)[cut]
    fp = (cut + 1) - tp

    fpr = np.concatenate([[0.0], fp / neg])
    tpr = np.concatenate([[0.0], tp / pos])
    thresholds = np.concatenate([[np.inf], sorted_scores[cut]])
    auc = float(_trapezoid(tpr, fpr))
    return RocCurve(fpr=fpr, tpr=tpr, thresholds=thresholds), auc


def tpr_at_fpr(curve: RocCurve, target: float) -> float:
    """TPR at the largest achieved FPR <= target, interpolated to the target.

    Vertical segments resolve to their top point.
    """
    if not (0.0 <= target <= 1.0):
        raise ValueError("target FPR must be in [0, 1]")
    fpr, tpr = curve.fpr, curve.tpr
    at_or_below = np.nonzero(fpr <= target)[0]
    i = int(at_or_below[-1])  # fpr[0] == 0, so this always exists
    if fpr[i] == target or i == len(fpr) - 1:
        return float(tpr[i])
    # Interpolate along the segment crossing the target.
    f0, f1 = fpr[i], fpr[i + 1]
    t0, t1 = tpr[i], tpr[i + 1]
    return float(t0 + (t1 - t0) * (target - f0) / (f1 - f0))
