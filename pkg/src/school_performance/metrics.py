"""Metrics to assess binary classifiers of student performance.

Class 1 ("Above Average") is the positive class throughout.
"""

import warnings
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
import pandas as pd

from school_performance._metrics.classification_utils import (
    _per_class_report,
    _roc_points,
    _safe_ratio,
    _trapezoid_auc,
)
from school_performance.nn.model import bce_loss
from school_performance.utils.constants import CLASS_NAMES
from school_performance.utils.defence import (
    _check_binary_vector,
    _check_same_length,
    _type_defence,
)


@dataclass(frozen=True)
class ConfusionMatrix:
    """Counts of the four outcomes of a binary classifier."""

    tp: int
    tn: int
    fp: int
    fn: int

    def __post_init__(self):
        for nm in ("tp", "tn", "fp", "fn"):
            val = getattr(self, nm)
            _type_defence(val, nm, (int, np.integer))
            if val < 0:
                raise ValueError(f"`{nm}` must be >= 0. Got {val}")

    @property
    def total(self) -> int:
        """Number of evaluated rows."""
        return self.tp + self.tn + self.fp + self.fn


@dataclass(frozen=True)
class RoundMetrics:
    """Evaluation summary of one model on one test set.

    `degenerate` is True when precision or recall had a zero denominator
    and was reported as 0. `auc` is None when the labels hold one class.
    """

    accuracy: float
    precision: float
    recall: float
    f1: float
    loss: float
    auc: Optional[float] = None
    degenerate: bool = False

    def to_dict(self) -> dict:
        """Field values keyed by name."""
        return asdict(self)


@dataclass(frozen=True)
class RocCurve:
    """ROC points, from (0, 0) to (1, 1), with their thresholds and area."""

    thresholds: np.ndarray
    fpr: np.ndarray
    tpr: np.ndarray
    auc: float

    @property
    def points(self) -> list:
        """The (fpr, tpr) pairs in threshold order."""
        return list(zip(self.fpr.tolist(), self.tpr.tolist()))


def confusion(predicted, actual) -> ConfusionMatrix:
    """Build the confusion matrix of predicted against actual labels.

    Raises
    ------
    ValueError
        Lengths differ, the inputs are empty or not binary.

    Examples
    --------
    >>> confusion([1, 1], [0, 0])
    ConfusionMatrix(tp=0, tn=0, fp=2, fn=0)

    """
    pred = _check_binary_vector(predicted, "predicted")
    act = _check_binary_vector(actual, "actual")
    _check_same_length(pred, act, "predicted", "actual")
    if len(act) == 0:
        raise ValueError("`actual` must not be empty.")
    return ConfusionMatrix(
        tp=int(np.sum((pred == 1) & (act == 1))),
        tn=int(np.sum((pred == 0) & (act == 0))),
        fp=int(np.sum((pred == 1) & (act == 0))),
        fn=int(np.sum((pred == 0) & (act == 1))),
    )


def accuracy(cm: ConfusionMatrix) -> float:
    """Share of correct predictions, (tp + tn) / total."""
    _type_defence(cm, "cm", ConfusionMatrix)
    return (cm.tp + cm.tn) / cm.total


def precision(cm: ConfusionMatrix) -> float:
    """tp / (tp + fp); 0 with a UserWarning when nothing is predicted 1."""
    _type_defence(cm, "cm", ConfusionMatrix)
    value, degenerate = _safe_ratio(cm.tp, cm.tp + cm.fp)
    if degenerate:
        warnings.warn(
            "precision is undefined (tp + fp = 0); reported as 0.",
            UserWarning,
        )
    return value


def recall(cm: ConfusionMatrix) -> float:
    """tp / (tp + fn); 0 with a UserWarning when there are no positives."""
    _type_defence(cm, "cm", ConfusionMatrix)
    value, degenerate = _safe_ratio(cm.tp, cm.tp + cm.fn)
    if degenerate:
        warnings.warn(
            "recall is undefined (tp + fn = 0); reported as 0.", UserWarning
        )
    return value


def _f1_from(p: float, r: float) -> float:
    return _safe_ratio(2 * p * r, p + r)[0]


def f1(cm: ConfusionMatrix) -> float:
    """Harmonic mean of precision and recall; 0 when both are 0."""
    _type_defence(cm, "cm", ConfusionMatrix)
    p, _ = _safe_ratio(cm.tp, cm.tp + cm.fp)
    r, _ = _safe_ratio(cm.tp, cm.tp + cm.fn)
    return _f1_from(p, r)


def roc_auc(scores, actual) -> RocCurve:
    """ROC curve and trapezoidal AUC.

    Parameters
    ----------
    scores : array-like
        Real scores, larger meaning more likely class 1.
    actual : array-like
        Binary labels.

    Returns
    -------
    RocCurve
        One point per distinct score plus the (0, 0) origin.

    Raises
    ------
    ValueError
        Lengths differ, scores are not finite, or only one class is present.

    Examples
    --------
    >>> roc_auc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]).auc
    0.75

    """
    s = np.asarray(scores, dtype=np.float64)
    act = _check_binary_vector(actual, "actual")
    _check_same_length(s, act, "scores", "actual")
    if not np.isfinite(s).all():
        raise ValueError("`scores` must be finite.")
    if act.size == 0 or act.min() == act.max():
        raise ValueError("AUC undefined: `actual` must contain both classes.")
    thresholds, fpr, tpr = _roc_points(s, act)
    return RocCurve(
        thresholds=thresholds, fpr=fpr, tpr=tpr, auc=_trapezoid_auc(fpr, tpr)
    )


def evaluate(scores, predicted, actual) -> RoundMetrics:
    """Assemble the metric suite for one set of predictions.

    Parameters
    ----------
    scores : array-like
        Predicted class-1 probabilities.
    predicted : array-like
        Predicted labels (probability > 0.5).
    actual : array-like
        True labels.

    Returns
    -------
    RoundMetrics
        Accuracy, precision, recall, F1, mean BCE loss and AUC.

    """
    cm = confusion(predicted, actual)
    p, p_degenerate = _safe_ratio(cm.tp, cm.tp + cm.fp)
    r, r_degenerate = _safe_ratio(cm.tp, cm.tp + cm.fn)
    if p_degenerate or r_degenerate:
        warnings.warn(
            f"Degenerate confusion matrix {cm}; undefined precision/recall "
            "reported as 0.",
            UserWarning,
        )
    act = np.asarray(actual)
    auc = roc_auc(scores, act).auc if act.min() != act.max() else None
    return RoundMetrics(
        accuracy=accuracy(cm),
        precision=p,
        recall=r,
        f1=_f1_from(p, r),
        loss=bce_loss(scores, act),
        auc=auc,
        degenerate=p_degenerate or r_degenerate,
    )


def classification_report(cm: ConfusionMatrix) -> pd.DataFrame:
    """Per-class precision, recall, F1 and support.

    Rows are "Below Average" (class 0) and "Above Average" (class 1).
    """
    _type_defence(cm, "cm", ConfusionMatrix)
    return _per_class_report(cm.tp, cm.tn, cm.fp, cm.fn, CLASS_NAMES)


def roc_to_frame(roc: RocCurve) -> pd.DataFrame:
    """Tabulate a ROC curve for export.

    Columns are threshold, fpr and tpr; a trailing record with threshold
    "auc" carries the area in the tpr column.
    """
    _type_defence(roc, "roc", RocCurve)
    frame = pd.DataFrame(
        {
            "threshold": [format(t, ".17g") for t in roc.thresholds],
            "fpr": [format(v, ".17g") for v in roc.fpr],
            "tpr": [format(v, ".17g") for v in roc.tpr],
        }
    )
    auc_row = pd.DataFrame(
        {"threshold": ["auc"], "fpr": [""], "tpr": [format(roc.auc, ".17g")]}
    )
    return pd.concat([frame, auc_row], ignore_index=True)
