"""Open-set and 1-class metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError


def openness(num_training_classes: int, num_total_classes: int) -> float:
    """``1 - sqrt(train / total)``; 0 for a closed world."""
    if not 1 <= num_training_classes <= num_total_classes:
        raise ParameterError("need 1 <= num_training_classes <= num_total_classes")
    return 1.0 - math.sqrt(num_training_classes / num_total_classes)


def f_measure(precision: float, recall: float) -> float:
    """Harmonic mean of precision and recall, 0 when both are 0."""
    if precision == recall:
        # the harmonic mean of equal values is that value; skip the rounding of 2pr/(p+r)
        return float(precision)
    return 2.0 * precision * recall / (precision + recall)


@dataclass
class OpenSetCounts:
    true_positive: int
    false_positive: int
    known_total: int
    accepted: int

    @property
    def precision(self) -> float:
        return self.true_positive / self.accepted if self.accepted else 0.0

    @property
    def recall(self) -> float:
        return self.true_positive / self.known_total if self.known_total else 0.0

    @property
    def f(self) -> float:
        return f_measure(self.precision, self.recall)


def open_set_counts(pred_labels, confidences, true_labels, known_classes,
                    threshold: float) -> OpenSetCounts:
    """Confusion counts for open-set recognition.

    A sample is *accepted* when its confidence exceeds ``threshold`` and its
    predicted label is a known class; everything else is a rejection. True
    positives are accepted known-class samples with the right label. Every
    other acceptance (an unknown-class sample, or a known one with the wrong
    label) is a false positive. Recall is over all known-class samples.
    """
    pred = np.asarray(pred_labels)
    conf = np.asarray(confidences)
    true = np.asarray(true_labels)
    known = np.asarray(list(known_classes))
    accepted = (conf > threshold) & np.isin(pred, known)
    is_known = np.isin(true, known)
    tp = int(np.sum(accepted & is_known & (pred == true)))
    n_acc = int(np.sum(accepted))
    return OpenSetCounts(tp, n_acc - tp, int(np.sum(is_known)), n_acc)


@dataclass
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray

    @property
    def auc(self) -> float:
        x, y = self.fpr, self.tpr
        return float(np.sum((x[1:] - x[:-1]) * (y[1:] + y[:-1]) / 2.0))

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.fpr.tolist(), self.tpr.tolist()))


def roc_and_auc(scores, is_positive) -> RocCurve:
    """ROC by sweeping a threshold down through the unique scores.

    Tied scores enter the curve together, so the trapezoidal area equals
    ``P(s+ > s-) + P(s+ == s-)/2``.
    """
    s = np.asarray(scores, dtype=np.float64)
    pos = np.asarray(is_positive, dtype=bool)
    if s.shape != pos.shape or s.ndim != 1:
        raise ParameterError("scores and labels must be equal-length 1-D sequences")
    n_pos = int(pos.sum())
    n_neg = pos.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ParameterError("ROC needs at least one positive and one negative")
    order = np.argsort(-s, kind="mergesort")
    s_sorted, pos_sorted = s[order], pos[order]
    tp = np.cumsum(pos_sorted)
    fp = np.cumsum(~pos_sorted)
    # last index of each run of equal scores
    last = np.flatnonzero(np.r_[s_sorted[1:] != s_sorted[:-1], True])
    tpr = np.r_[0.0, tp[last] / n_pos]
    fpr = np.r_[0.0, fp[last] / n_neg]
    thr = np.r_[np.inf, s_sorted[last]]
    return RocCurve(fpr, tpr, thr)


def average_roc(curves: list[RocCurve], grid_points: int = 101) -> RocCurve:
    """Vertical average: mean TPR at each FPR of a uniform grid.

    Each curve is read as a step-free piecewise-linear function; where a
    curve is vertical at a grid FPR the highest TPR there is used, so
    averaging identical curves reproduces them at the grid points.
    """
    grid = np.linspace(0.0, 1.0, grid_points)
    tpr = np.mean([_interp_upper(c, grid) for c in curves], axis=0)
    return RocCurve(grid, tpr, np.full(grid_points, np.nan))


def _interp_upper(c: RocCurve, grid: np.ndarray) -> np.ndarray:
    out = np.empty_like(grid)
    for i, f in enumerate(grid):
        idx = np.searchsorted(c.fpr, f, side="right") - 1
        if idx >= len(c.fpr) - 1:
            out[i] = c.tpr[-1]
            continue
        if c.fpr[idx] == f:
            out[i] = c.tpr[idx]
            continue
        f0, f1 = c.fpr[idx], c.fpr[idx + 1]
        out[i] = c.tpr[idx] + (c.tpr[idx + 1] - c.tpr[idx]) * (f - f0) / (f1 - f0)
    return out

