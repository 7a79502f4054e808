"""Confusion counts, accuracy / detection rate / false alarm rate, ROC and AUC.

All rates are percentages. The false alarm rate divides false accident
reports by the total number of cases, not by the number of negatives.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class RocPoint:
    false_positive_rate: float
    true_positive_rate: float
    threshold: float


@dataclass(frozen=True)
class EvalReport:
    confusion: ConfusionMatrix
    accuracy: float
    detection_rate: float
    false_alarm_rate: float
    auc: float
    threshold: float
    roc: list[RocPoint] = field(default_factory=list)


def confusion(predictions: Sequence[int], labels: Sequence[int]) -> ConfusionMatrix:
    pred = np.asarray(predictions)
    lab = np.asarray(labels)
    if pred.shape != lab.shape:
        raise ValueError(f"predictions and labels differ in length: {pred.shape} vs {lab.shape}")
    if pred.size == 0:
        raise ValueError("confusion matrix of an empty sample is undefined")
    pos, neg = pred == 1, pred == 0
    return ConfusionMatrix(
        tp=int(np.sum(pos & (lab == 1))),
        fp=int(np.sum(pos & (lab == 0))),
        fn=int(np.sum(neg & (lab == 1))),
        tn=int(np.sum(neg & (lab == 0))),
    )


def accuracy(cm: ConfusionMatrix) -> float:
    if cm.total == 0:
        raise ValueError("accuracy of an empty confusion matrix is undefined")
    return (cm.tp + cm.tn) / cm.total * 100.0


def detection_rate(cm: ConfusionMatrix) -> float:
    if cm.tp + cm.fn == 0:
        raise ValueError("detection rate undefined: no accidents in the data")
    return cm.tp / (cm.tp + cm.fn) * 100.0


def false_alarm_rate(cm: ConfusionMatrix) -> float:
    if cm.total == 0:
        raise ValueError("false alarm rate of an empty confusion matrix is undefined")
    return cm.fp / cm.total * 100.0


def roc_curve(scores: Sequence[float], labels: Sequence[int]) -> list[RocPoint]:
    """ROC points for the rule ``score >= threshold``.

    Starts at (0, 0) with an infinite threshold, then one point per distinct
    score in descending order; the last one is always (1, 1).
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.shape != y.shape:
        raise ValueError(f"scores and labels differ in length: {s.shape} vs {y.shape}")
    n_pos = int(np.sum(y == 1))
    n_neg = int(np.sum(y == 0))
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC curve needs both classes in the labels")
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    tps = np.cumsum(y == 1)
    fps = np.cumsum(y == 0)
    # last index of each run of equal scores
    ends = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    points = [RocPoint(0.0, 0.0, math.inf)]
    for i in ends:
        points.append(RocPoint(fps[i] / n_neg, tps[i] / n_pos, float(s[i])))
    return points


def auc(roc: Sequence[RocPoint]) -> float:
    if len(roc) < 2:
        raise ValueError("AUC needs at least two ROC points")
    x = np.array([p.false_positive_rate for p in roc])
    y = np.array([p.true_positive_rate for p in roc])
    return float(np.sum((x[1:] - x[:-1]) * (y[1:] + y[:-1]) / 2.0))


def classify_scores(scores, threshold: float) -> np.ndarray:
    return (np.asarray(scores) >= threshold).astype(np.int64)


@dataclass(frozen=True)
class SweepRow:
    threshold: float
    confusion: ConfusionMatrix
    accuracy: float
    detection_rate: float
    false_alarm_rate: float


def default_grid() -> list[float]:
    return [i / 100 for i in range(1, 100)]


def threshold_sweep(scores, labels, grid: Sequence[float] | None = None) -> tuple[float, list[SweepRow]]:
    """Pick the grid threshold maximising detection rate minus false alarm rate.

    Ties go to the lower threshold.
    """
    grid = default_grid() if grid is None else list(grid)
    if not grid:
        raise ValueError("threshold grid is empty")
    if any(not 0.0 < t < 1.0 for t in grid) or any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("threshold grid must be strictly increasing inside (0, 1)")
    table = []
    best, best_score = None, -math.inf
    for t in grid:
        cm = confusion(classify_scores(scores, t), labels)
        try:
            row = SweepRow(t, cm, accuracy(cm), detection_rate(cm), false_alarm_rate(cm))
        except ValueError as exc:
            raise ValueError(f"threshold sweep failed at threshold {t}: {exc}") from exc
        table.append(row)
        score = row.detection_rate - row.false_alarm_rate
        if score > best_score:
            best, best_score = t, score
    return best, table


def evaluate(scores, labels, threshold: float) -> EvalReport:
    cm = confusion(classify_scores(scores, threshold), labels)
    roc = roc_curve(scores, labels)
    return EvalReport(
        confusion=cm,
        accuracy=accuracy(cm),
        detection_rate=detection_rate(cm),
        false_alarm_rate=false_alarm_rate(cm),
        auc=auc(roc),
        threshold=threshold,
        roc=roc,
    )


def metrics_csv(report: EvalReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["metric", "value"])
    cm = report.confusion
    for name, value in (
        ("tp", cm.tp), ("fp", cm.fp), ("fn", cm.fn), ("tn", cm.tn),
        ("accuracy", report.accuracy),
        ("detection_rate", report.detection_rate),
        ("false_alarm_rate", report.false_alarm_rate),
        ("auc", report.auc),
        ("threshold", report.threshold),
    ):
        w.writerow([name, repr(value) if isinstance(value, float) else value])
    return buf.getvalue()


def roc_csv(roc: Sequence[RocPoint]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["threshold", "fpr", "tpr"])
    for p in roc:
        w.writerow([repr(float(p.threshold)), repr(float(p.false_positive_rate)), repr(float(p.true_positive_rate))])
    return buf.getvalue()
