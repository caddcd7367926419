"""Classification metric helper functions."""

from typing import Tuple

import numpy as np
import pandas as pd


def _safe_ratio(numerator: float, denominator: float) -> Tuple[float, bool]:
    """Return numerator / denominator, or (0.0, True) when it is undefined."""
    if denominator == 0:
        return 0.0, True
    return numerator / denominator, False


def _roc_points(
    scores: np.ndarray, actual: np.ndarray
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Sweep decision thresholds over the distinct scores, highest first.

    Tied scores are grouped into a single point, so a tie between a positive
    and a negative contributes a diagonal segment (half credit in the area).

    Parameters
    ----------
    scores : np.ndarray
        Real valued scores, larger meaning more likely class 1.
    actual : np.ndarray
        Binary labels containing both classes.

    Returns
    -------
    Tuple[np.ndarray, np.ndarray, np.ndarray]
        Thresholds (starting at +inf), false positive rates and true
        positive rates. Rates start at 0 and end at 1.

    """
    order = np.argsort(-scores, kind="mergesort")
    sorted_scores = scores[order]
    sorted_actual = actual[order]
    # last position of every run of equal scores
    ends = np.r_[np.flatnonzero(np.diff(sorted_scores)), len(scores) - 1]
    tps = np.cumsum(sorted_actual)[ends]
    fps = (ends + 1) - tps
    n_pos = sorted_actual.sum()
    n_neg = len(sorted_actual) - n_pos
    thresholds = np.r_[np.inf, sorted_scores[ends]]
    fpr = np.r_[0.0, fps / n_neg]
    tpr = np.r_[0.0, tps / n_pos]
    return thresholds, fpr, tpr


def _trapezoid_auc(fpr: np.ndarray, tpr: np.ndarray) -> float:
    """Area under a piecewise linear curve by the trapezoidal rule."""
    return float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))


def _per_class_report(
    tp: int, tn: int, fp: int, fn: int, class_names: Tuple[str, str]
) -> pd.DataFrame:
    """Precision, recall, F1 and support for each class.

    The class-0 row treats class 0 as the positive class, i.e. it swaps
    tp <-> tn and fp <-> fn.
    """
    rows = []
    for name, (t_pos, f_pos, f_neg) in zip(
        class_names, [(tn, fn, fp), (tp, fp, fn)]
    ):
        precision, _ = _safe_ratio(t_pos, t_pos + f_pos)
        recall, _ = _safe_ratio(t_pos, t_pos + f_neg)
        f1, _ = _safe_ratio(2 * precision * recall, precision + recall)
        rows.append(
            {
                "class": name,
                "precision": precision,
                "recall": recall,
                "f1": f1,
                "support": t_pos + f_neg,
            }
        )
    return pd.DataFrame(rows)
