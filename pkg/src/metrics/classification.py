"""
Binary classification metrics.

Accuracy, precision, recall (sensitivity), F1 and specificity computed from
a confusion matrix.  A metric whose denominator is zero is reported as
``None`` (serialized as JSON null), never as NaN or a made-up 0/1.
"""
from __future__ import annotations

from typing import Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field


class EmptyMatrix(ValueError):
    pass


class ConfusionMatrix(BaseModel):
    """TP/TN/FP/FN counts; the positive class is +1 (affected)."""

    model_config = ConfigDict(frozen=True)

    tp: int = Field(0, ge=0)
    tn: int = Field(0, ge=0)
    fp: int = Field(0, ge=0)
    fn: int = Field(0, ge=0)

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    @property
    def accuracy(self) -> float:
        if self.total == 0:
            raise EmptyMatrix("confusion matrix has no entries")
        return (self.tp + self.tn) / self.total


class MetricsReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    accuracy: Optional[float] = None
    precision: Optional[float] = None
    recall: Optional[float] = None
    f1: Optional[float] = None
    specificity: Optional[float] = None

    def rounded(self, places: int = 6) -> "MetricsReport":
        """Copy with every defined value rounded, for written reports."""
        return MetricsReport(
            **{
                name: (None if value is None else round(value, places))
                for name, value in self.model_dump().items()
            }
        )


def _ratio(num: int, den: int) -> Optional[float]:
    return num / den if den > 0 else None


def compute_metrics(cm: ConfusionMatrix) -> MetricsReport:
    if cm.total < 1:
        raise EmptyMatrix("confusion matrix has no entries")
    precision = _ratio(cm.tp, cm.tp + cm.fp)
    recall = _ratio(cm.tp, cm.tp + cm.fn)
    f1 = None
    if precision is not None and recall is not None and precision + recall > 0:
        f1 = 2 * precision * recall / (precision + recall)
    return MetricsReport(
        accuracy=(cm.tp + cm.tn) / cm.total,
        precision=precision,
        recall=recall,
        f1=f1,
        specificity=_ratio(cm.tn, cm.tn + cm.fp),
    )


def tally(labels: Sequence[int] | np.ndarray, predictions: Sequence[int] | np.ndarray) -> ConfusionMatrix:
    """Count a confusion matrix from +/-1 labels and predictions."""
    y = np.asarray(labels)
    p = np.asarray(predictions)
    if y.shape != p.shape:
        raise ValueError(f"labels {y.shape} and predictions {p.shape} differ in shape")
    return ConfusionMatrix(
        tp=int(np.sum((y == 1) & (p == 1))),
        tn=int(np.sum((y == -1) & (p == -1))),
        fp=int(np.sum((y == -1) & (p == 1))),
        fn=int(np.sum((y == 1) & (p == -1))),
    )
