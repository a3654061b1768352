"""Confusion matrix and the rate metrics derived from it.

Multiclass rates use a one-vs-rest reduction per class and an unweighted
(macro) mean across classes. Any rate whose denominator is zero is reported
as ``None`` rather than silently becoming 0.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import ShapeError, UndefinedMetricError, LabelError

RATE_NAMES = ("sensitivity", "specificity", "precision", "recall", "f1")


@dataclass
class ConfusionMatrix:
    """Counts with rows = true class and columns = predicted class."""

    counts: np.ndarray
    class_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        c = self.counts.shape[0]
        if self.counts.ndim != 2 or self.counts.shape != (c, c):
            raise ShapeError(f"confusion matrix must be square, got {self.counts.shape}")
        if np.any(self.counts < 0):
            raise ValueError("counts must be non-negative")
        if not self.class_names:
            self.class_names = [str(i) for i in range(c)]
        if len(self.class_names) != c:
            raise ShapeError("need one class name per row")

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def n_classes(self) -> int:
        return self.counts.shape[0]

    def one_vs_rest(self, c: int) -> tuple[int, int, int, int]:
        """``(TP, FN, FP, TN)`` for class ``c`` against all others."""
        tp = int(self.counts[c, c])
        fn = int(self.counts[c].sum()) - tp
        fp = int(self.counts[:, c].sum()) - tp
        return tp, fn, fp, self.total - tp - fn - fp

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["true\\pred"] + list(self.class_names))
        for name, row in zip(self.class_names, self.counts):
            w.writerow([name] + [int(v) for v in row])
        return buf.getvalue()


def confusion_matrix(y_true: Sequence[int], y_pred: Sequence[int], n_classes: int,
                     class_names: Sequence[str] | None = None) -> ConfusionMatrix:
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape or y_true.ndim != 1:
        raise ShapeError("y_true and y_pred must be 1-D and equally long")
    for arr in (y_true, y_pred):
        if arr.size and (arr.min() < 0 or arr.max() >= n_classes):
            raise LabelError(f"labels must lie in [0, {n_classes})")
    counts = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(counts, (y_true, y_pred), 1)
    return ConfusionMatrix(counts, list(class_names) if class_names else [])


def _ratio(num: int, den: int) -> float | None:
    return None if den == 0 else float(Fraction(num, den))


def accuracy(cm: ConfusionMatrix) -> float:
    """Correct predictions over all predictions (trace / total)."""
    if cm.total == 0:
        raise UndefinedMetricError("accuracy of an empty confusion matrix")
    return float(Fraction(int(np.trace(cm.counts)), cm.total))


@dataclass
class ClassRates:
    sensitivity: float | None
    specificity: float | None
    precision: float | None
    f1: float | None

    @property
    def recall(self) -> float | None:
        return self.sensitivity

    def as_dict(self) -> dict:
        return {"sensitivity": self.sensitivity, "specificity": self.specificity,
                "precision": self.precision, "recall": self.recall, "f1": self.f1}


def f1_score(precision: float | None, recall: float | None) -> float | None:
    if precision is None or recall is None or precision + recall == 0:
        return None
    return 2 * (precision * recall) / (precision + recall)


def class_rates(cm: ConfusionMatrix, c: int) -> ClassRates:
    if not 0 <= c < cm.n_classes:
        raise LabelError(f"class index {c} out of range")
    tp, fn, fp, tn = cm.one_vs_rest(c)
    sens = _ratio(tp, tp + fn)
    prec = _ratio(tp, tp + fp)
    return ClassRates(sens, _ratio(tn, tn + fp), prec, f1_score(prec, sens))


def macro(per_class: Sequence[ClassRates], name: str) -> tuple[float, int]:
    """Unweighted mean of one rate over classes where it is defined.

    Returns ``(mean, number_of_undefined_classes)``.
    """
    vals = [getattr(r, name) for r in per_class]
    defined = [v for v in vals if v is not None]
    if not defined:
        raise UndefinedMetricError(f"{name} is undefined for every class")
    return sum(defined) / len(defined), len(vals) - len(defined)


@dataclass
class MetricsReport:
    accuracy: float
    per_class: dict[str, ClassRates]
    macro: dict[str, float | None]
    macro_undefined: dict[str, int]
    confusion: ConfusionMatrix

    @property
    def undefined(self) -> list[str]:
        return [name for name, r in self.per_class.items() if None in r.as_dict().values()]

    def headline(self) -> dict[str, float | None]:
        return {"accuracy": self.accuracy, "f1": self.macro["f1"],
                "specificity": self.macro["specificity"], "sensitivity": self.macro["sensitivity"]}

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "per_class": {k: v.as_dict() for k, v in self.per_class.items()},
            "macro": dict(self.macro),
            "macro_undefined_counts": dict(self.macro_undefined),
            "confusion": self.confusion.counts.tolist(),
            "class_names": list(self.confusion.class_names),
            "undefined": self.undefined,
        }


def evaluate(y_true, y_pred, class_names: Sequence[str]) -> MetricsReport:
    cm = confusion_matrix(y_true, y_pred, len(class_names), class_names)
    per = {name: class_rates(cm, i) for i, name in enumerate(class_names)}
    mac, und = {}, {}
    for name in RATE_NAMES:
        try:
            mac[name], und[name] = macro(list(per.values()), name)
        except UndefinedMetricError:
            mac[name], und[name] = None, len(per)
    return MetricsReport(accuracy(cm), per, mac, und, cm)
