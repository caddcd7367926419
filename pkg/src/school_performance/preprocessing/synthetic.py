"""Synthetic school microdata for desk-scale experiments.

The generated table follows the external microdata schema (school ID,
proficiency score and questionnaire columns holding letter codes), so it can
be fed through exactly the same pipeline as the real files.
"""
from typing import Mapping, Optional, Tuple

import numpy as np
import pandas as pd
from scipy.special import expit

from school_performance.utils.constants import (
    DEFAULT_CATEGORY_COUNTS,
    DEFAULT_FEATURE_COLUMNS,
    SCHOOL_ID_COLUMN,
    TARGET_COLUMN,
)
from school_performance.utils.defence import (
    _check_in_range,
    _check_positive,
    _type_defence,
)

# 8 digit identifiers, like the national school codes
_FIRST_SCHOOL_ID = 35000001
_SCORE_FLOOR = 100.0
_SCORE_SPAN = 300.0


def default_feature_spec() -> dict:
    """Category counts of the default questionnaire columns (54 in total)."""
    return dict(zip(DEFAULT_FEATURE_COLUMNS, DEFAULT_CATEGORY_COUNTS))


def _category_codes(n: int) -> np.ndarray:
    """Letter codes "A", "B", ... for `n` categories."""
    return np.array([chr(ord("A") + k) for k in range(n)], dtype=object)


def generate_synthetic(
    schools: int = 50,
    rows_per_school: Tuple[int, int] = (40, 60),
    feature_spec: Optional[Mapping[str, int]] = None,
    heterogeneity: float = 0.5,
    seed: int = 42,
    noise: float = 0.5,
    missing_rate: float = 0.0,
) -> pd.DataFrame:
    """Generate a raw table of students grouped in schools.

    Every feature column has a shared prior over its categories. Each school
    mixes that prior with its own Dirichlet-drawn skew, weighted by
    `heterogeneity`: 0 gives identically distributed schools, 1 strongly
    Non-IID ones. The proficiency score is a logistic function of a hidden
    linear model over the categories plus Gaussian noise, so the categories
    carry a real predictive signal.

    Parameters
    ----------
    schools : int, optional
        Number of schools, by default 50.
    rows_per_school : Tuple[int, int], optional
        Inclusive (min, max) students per school, by default (40, 60).
    feature_spec : Mapping[str, int], optional
        Category count per feature column, by default None meaning the 11
        default questionnaire columns (54 categories).
    heterogeneity : float, optional
        Per-school skew in [0, 1], by default 0.5.
    seed : int, optional
        Random seed, by default 42.
    noise : float, optional
        Standard deviation of the noise added to the hidden linear score, by
        default 0.5. Use 0 for labels fully determined by the categories.
    missing_rate : float, optional
        Probability in [0, 1) that a feature cell is replaced by a missing
        marker ("." or "*"), by default 0.

    Returns
    -------
    pd.DataFrame
        Text cells with columns ID_ESCOLA, PROFICIENCIA_MT and the features.

    Raises
    ------
    ValueError
        `feature_spec` is empty, or a parameter is out of range.

    """
    _type_defence(schools, "schools", int)
    if schools < 1:
        raise ValueError(f"`schools` must be >= 1. Got {schools}")
    _type_defence(rows_per_school, "rows_per_school", (tuple, list))
    lo, hi = rows_per_school
    if not (1 <= lo <= hi):
        raise ValueError(
            f"`rows_per_school` must satisfy 1 <= min <= max. Got {lo}, {hi}"
        )
    feature_spec = (
        default_feature_spec() if feature_spec is None else dict(feature_spec)
    )
    if not feature_spec:
        raise ValueError("`feature_spec` must name at least one column.")
    for col, n in feature_spec.items():
        _type_defence(n, f"feature_spec['{col}']", int)
        if n < 1:
            raise ValueError(f"Column '{col}' needs at least one category.")
    _check_in_range(heterogeneity, "heterogeneity", 0, 1)
    _type_defence(seed, "seed", int)
    _check_positive(noise, "noise", allow_zero=True)
    _check_in_range(missing_rate, "missing_rate", 0, 1, closed_high=False)

    rng = np.random.default_rng(seed)
    priors = {
        c: rng.dirichlet(np.full(n, 2.0)) for c, n in feature_spec.items()
    }
    weights = {c: rng.normal(0.0, 1.0, n) for c, n in feature_spec.items()}

    frames = []
    for s in range(schools):
        n_rows = int(rng.integers(lo, hi + 1))
        latent = np.zeros(n_rows)
        cells = {}
        for col, n in feature_spec.items():
            skew = rng.dirichlet(np.full(n, 0.3))
            probs = (1 - heterogeneity) * priors[col] + heterogeneity * skew
            idx = rng.choice(n, size=n_rows, p=probs / probs.sum())
            latent += weights[col][idx]
            cells[col] = _category_codes(n)[idx]
        latent += noise * rng.normal(size=n_rows)
        scores = _SCORE_FLOOR + _SCORE_SPAN * expit(latent)
        frame = pd.DataFrame(cells)
        frame.insert(0, TARGET_COLUMN, [f"{x:.4f}" for x in scores])
        frame.insert(0, SCHOOL_ID_COLUMN, str(_FIRST_SCHOOL_ID + s))
        frames.append(frame)
    table = pd.concat(frames, ignore_index=True)

    if missing_rate > 0:
        for col in feature_spec:
            holes = rng.random(len(table)) < missing_rate
            markers = rng.choice(
                np.array([".", "*"], dtype=object), len(table)
            )
            table.loc[holes, col] = markers[holes]
    return table
