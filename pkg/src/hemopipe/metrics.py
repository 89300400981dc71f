"""Confusion-matrix metrics for the binary task.

All five metrics are percentages in [0, 100].  A metric whose denominator is
zero is undefined and returned as ``None``; reports render it as "n/a" so a
degenerate split can never masquerade as a zero score.

Matrix layout is [[TP, FP], [FN, TN]] with Cancer as the positive class.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    fn: int
    tn: int
    positive_class: str = "Cancer"

    def __post_init__(self) -> None:
        for name in ("tp", "fp", "fn", "tn"):
            v = getattr(self, name)
            if not isinstance(v, (int,)) or isinstance(v, bool):
                raise TypeError(f"{name} must be an integer count, got {v!r}")
            if v < 0:
                raise ValueError(f"{name} must be non-negative, got {v}")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def as_matrix(self) -> list[list[int]]:
        return [[self.tp, self.fp], [self.fn, self.tn]]


def confusion(preds: Sequence, truth: Sequence, positive) -> ConfusionMatrix:
    """Count TP/FP/FN/TN with ``positive`` as the positive class."""
    if len(preds) != len(truth):
        raise ValueError(f"length mismatch: {len(preds)} predictions vs {len(truth)} labels")
    if len(preds) == 0:
        raise ValueError("cannot build a confusion matrix from zero samples")
    tp = fp = fn = tn = 0
    for p, t in zip(preds, truth):
        if p == positive and t == positive:
            tp += 1
        elif p == positive:
            fp += 1
        elif t == positive:
            fn += 1
        else:
            tn += 1
    return ConfusionMatrix(tp=tp, fp=fp, fn=fn, tn=tn, positive_class=str(positive))


def accuracy(cm: ConfusionMatrix) -> float | None:
    if cm.total == 0:
        return None
    return 100.0 * (cm.tp + cm.tn) / cm.total


def precision(cm: ConfusionMatrix) -> float | None:
    denom = cm.tp + cm.fp
    if denom == 0:
        return None
    return 100.0 * cm.tp / denom


def recall(cm: ConfusionMatrix) -> float | None:
    denom = cm.tp + cm.fn
    if denom == 0:
        return None
    return 100.0 * cm.tp / denom


def specificity(cm: ConfusionMatrix) -> float | None:
    denom = cm.tn + cm.fp
    if denom == 0:
        return None
    return 100.0 * cm.tn / denom


def f1(precision_pct: float | None, recall_pct: float | None) -> float | None:
    """Harmonic mean of precision and recall, both given as percentages."""
    if precision_pct is None or recall_pct is None:
        return None
    if precision_pct + recall_pct == 0:
        return None
    return 2.0 * precision_pct * recall_pct / (precision_pct + recall_pct)


def normalize(cm: ConfusionMatrix) -> list[list[float | None]]:
    """Row-normalize [[TP, FP], [FN, TN]]; zero-support rows become None."""
    rows: list[list[float | None]] = []
    for row in cm.as_matrix():
        support = sum(row)
        if support == 0:
            rows.append([None, None])
        else:
            rows.append([v / support for v in row])
    return rows


def swap_positive(cm: ConfusionMatrix, new_positive: str) -> ConfusionMatrix:
    """The same predictions counted with the other class as positive."""
    return ConfusionMatrix(
        tp=cm.tn, fp=cm.fn, fn=cm.fp, tn=cm.tp, positive_class=new_positive
    )
