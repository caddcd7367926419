"""Preprocess raw assessment microdata into a model-ready Dataset.

The steps mirror the processed-file workflow: select the questionnaire
features, drop rows without a target score, binarise the score at its
median, normalise missing markers and impute each feature with its mode,
then one-hot encode. `stratified_split` and `partition_by_school` prepare the
centralised and federated arms respectively.
"""
import warnings
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from school_performance.preprocessing.dataset import (
    ClientPartition,
    Dataset,
    SplitDataset,
)
from school_performance.utils.constants import (
    DEFAULT_FEATURE_COLUMNS,
    DEFAULT_MISSING_MARKERS,
    LABEL_COLUMN,
    SCHOOL_ID_COLUMN,
    TARGET_COLUMN,
)
from school_performance.utils.defence import (
    _check_column_in_df,
    _check_in_range,
    _check_iterable,
    _raw_table_defence,
    _type_defence,
)


@dataclass(frozen=True)
class PipelineSpec:
    """Column selection and missing-value conventions of the raw table.

    Parameters
    ----------
    feature_columns : tuple
        Questionnaire columns to encode. Defaults to the 11 SAEB columns in
        `DEFAULT_FEATURE_COLUMNS`.
    school_id_column : str
        School identifier column, by default "ID_ESCOLA".
    target_column : str
        Continuous proficiency column, by default "PROFICIENCIA_MT".
    missing_markers : frozenset
        Text tokens treated as missing, by default {".", "*"}. Empty and
        whitespace-only cells are always missing.
    label_column : str
        Name given to the binarised target, by default "ALVO_CLASSIFICACAO".

    Raises
    ------
    ValueError
        `feature_columns` is empty, holds duplicates, or overlaps the school
        or target columns.

    """

    feature_columns: Tuple[str, ...] = DEFAULT_FEATURE_COLUMNS
    school_id_column: str = SCHOOL_ID_COLUMN
    target_column: str = TARGET_COLUMN
    missing_markers: FrozenSet[str] = field(
        default_factory=lambda: DEFAULT_MISSING_MARKERS
    )
    label_column: str = LABEL_COLUMN

    def __post_init__(self):
        # accept lists/sets from config files
        object.__setattr__(
            self, "feature_columns", tuple(self.feature_columns)
        )
        object.__setattr__(
            self, "missing_markers", frozenset(self.missing_markers)
        )
        _check_iterable(self.feature_columns, "feature_columns", tuple)
        _type_defence(self.school_id_column, "school_id_column", str)
        _type_defence(self.target_column, "target_column", str)
        if not self.feature_columns:
            raise ValueError("`feature_columns` must not be empty.")
        if len(set(self.feature_columns)) != len(self.feature_columns):
            raise ValueError("`feature_columns` contains duplicates.")
        reserved = {self.school_id_column, self.target_column}
        overlap = reserved.intersection(self.feature_columns)
        if overlap:
            raise ValueError(
                f"`feature_columns` must not include {sorted(overlap)}."
            )

    @property
    def required_columns(self) -> List[str]:
        """Columns a raw table must provide."""
        return [
            self.school_id_column,
            self.target_column,
            *self.feature_columns,
        ]


def _missing_mask(column: pd.Series, markers: FrozenSet[str]) -> pd.Series:
    """Flag NaN cells, blank cells and missing markers."""
    stripped = column.astype("string").str.strip()
    return column.isna() | stripped.isin(set(markers) | {""}).fillna(False)


def binarize_target(
    scores: Union[Sequence[float], np.ndarray]
) -> Tuple[np.ndarray, float]:
    """Binarise proficiency scores at their median.

    Scores strictly above the median are class 1, scores less than or equal
    to it class 0, so ties at the median always fall in class 0.

    Parameters
    ----------
    scores : Union[Sequence[float], np.ndarray]
        Proficiency scores with missing values already dropped.

    Returns
    -------
    Tuple[np.ndarray, float]
        The int64 label vector and the median threshold.

    Raises
    ------
    ValueError
        `scores` is empty or contains NaN.

    Examples
    --------
    >>> labels, threshold = binarize_target([1.0, 2.0, 3.0, 4.0])
    >>> labels.tolist(), threshold
    ([0, 0, 1, 1], 2.5)

    """
    arr = np.asarray(scores, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("no scores")
    if np.isnan(arr).any():
        raise ValueError("`scores` contains NaN; drop missing targets first.")
    threshold = float(np.median(arr))
    return (arr > threshold).astype(np.int64), threshold


def drop_missing_target(
    table: pd.DataFrame, spec: PipelineSpec
) -> pd.DataFrame:
    """Drop rows whose target cell is missing or a missing marker.

    Parameters
    ----------
    table : pd.DataFrame
        Raw table of text cells.
    spec : PipelineSpec
        Names the target column and the missing markers.

    Returns
    -------
    pd.DataFrame
        The rows with a present target, re-indexed from 0.

    Raises
    ------
    IndexError
        The target column is absent.

    """
    _raw_table_defence(table, "table")
    _type_defence(spec, "spec", PipelineSpec)
    _check_column_in_df(table, spec.target_column)
    missing = _missing_mask(table[spec.target_column], spec.missing_markers)
    return table.loc[~missing.to_numpy()].reset_index(drop=True)


def normalise_missing(table: pd.DataFrame, spec: PipelineSpec) -> pd.DataFrame:
    """Replace missing markers in the feature columns with NaN.

    Returns a copy; cells that are not missing are returned stripped of
    surrounding whitespace.
    """
    _raw_table_defence(table, "table")
    out = table.copy()
    for col in spec.feature_columns:
        _check_column_in_df(out, col)
        missing = _missing_mask(out[col], spec.missing_markers)
        cleaned = out[col].astype("string").str.strip().astype(object)
        cleaned[missing.to_numpy()] = np.nan
        out[col] = cleaned
    return out


def impute_mode(
    column: Union[pd.Series, Sequence[Optional[str]]]
) -> pd.Series:
    """Fill missing cells with the most frequent category.

    Ties between equally frequent categories go to the lexicographically
    smallest one. Present cells are never changed.

    Parameters
    ----------
    column : Union[pd.Series, Sequence[Optional[str]]]
        Category cells, with None/NaN for missing.

    Returns
    -------
    pd.Series
        The imputed column (object dtype).

    Raises
    ------
    ValueError
        Every cell is missing.

    Examples
    --------
    >>> impute_mode(["A", "B", None]).tolist()
    ['A', 'B', 'A']

    """
    series = (
        column.copy()
        if isinstance(column, pd.Series)
        else pd.Series(list(column), dtype=object)
    )
    counts = series.dropna().astype(str).value_counts()
    if counts.empty:
        raise ValueError(
            f"cannot impute column '{series.name}': every cell is missing."
        )
    mode = sorted(counts.index[counts == counts.max()])[0]
    return series.where(series.notna(), mode).astype(object)


def one_hot_encode(
    table: pd.DataFrame,
    spec: PipelineSpec,
    categories: Optional[Dict[str, Sequence[str]]] = None,
) -> Dataset:
    """One-hot encode the feature columns of an imputed table.

    Each column with N categories becomes N {0, 1} columns named
    "<column>_<category>", categories in lexicographic order. When a
    vocabulary is supplied through `categories`, it fixes the layout and
    values outside it encode to an all-zero block.

    Parameters
    ----------
    table : pd.DataFrame
        Table with no missing feature cells, holding the school identifier
        and the binary label column `spec.label_column`.
    spec : PipelineSpec
        Column configuration.
    categories : Dict[str, Sequence[str]], optional
        Category vocabulary per column, by default None meaning it is
        discovered from `table`.

    Returns
    -------
    Dataset
        The encoded dataset; `categories` records the vocabulary used.

    Raises
    ------
    IndexError
        A required column is absent.
    ValueError
        A feature cell is missing.

    """
    _raw_table_defence(table, "table")
    _type_defence(spec, "spec", PipelineSpec)
    _type_defence(categories, "categories", (dict, type(None)))
    required = [spec.school_id_column, spec.label_column]
    for col in required + list(spec.feature_columns):
        _check_column_in_df(table, col)

    blocks = []
    names = []
    vocab = {}
    for col in spec.feature_columns:
        values = table[col]
        if values.isna().any():
            first = int(np.flatnonzero(values.isna().to_numpy())[0])
            raise ValueError(
                f"Column '{col}' has missing cells (first at row {first}). "
                "Impute before encoding."
            )
        values = values.astype(str)
        if categories is not None and col in categories:
            cats = tuple(str(c) for c in categories[col])
        else:
            cats = tuple(sorted(values.unique()))
        codes = pd.Categorical(values, categories=cats).codes
        block = np.zeros((len(values), len(cats)), dtype=np.uint8)
        seen = codes >= 0
        block[np.flatnonzero(seen), codes[seen]] = 1
        if not seen.all():
            unseen = sorted(values[~seen].unique())
            warnings.warn(
                f"Column '{col}' holds categories {unseen} outside the "
                "vocabulary; they are encoded as all-zero blocks.",
                UserWarning,
            )
        blocks.append(block)
        names.extend(f"{col}_{c}" for c in cats)
        vocab[col] = cats

    return Dataset(
        features=np.hstack(blocks),
        labels=table[spec.label_column].to_numpy().astype(np.int64),
        school_ids=pd.to_numeric(table[spec.school_id_column])
        .to_numpy()
        .astype(np.int64),
        feature_names=names,
        categories=vocab,
    )


def decode_one_hot(data: Dataset) -> pd.DataFrame:
    """Recover the category of every row per original column.

    All-zero blocks (unseen categories) decode to NaN.
    """
    _type_defence(data, "data", Dataset)
    if not data.categories:
        raise ValueError("`data` carries no category vocabulary to decode.")
    out = {}
    start = 0
    for col, cats in data.categories.items():
        block = data.features[:, start : start + len(cats)]
        decoded = np.asarray(cats, dtype=object)[block.argmax(axis=1)]
        decoded[block.sum(axis=1) == 0] = np.nan
        out[col] = decoded
        start += len(cats)
    return pd.DataFrame(out)


def preprocess(
    table: pd.DataFrame, spec: PipelineSpec = PipelineSpec()
) -> Tuple[Dataset, float]:
    """Run the full cleaning and encoding pipeline on a raw table.

    Parameters
    ----------
    table : pd.DataFrame
        Raw table of text cells, as returned by `read_raw_table()`.
    spec : PipelineSpec, optional
        Column configuration, by default `PipelineSpec()`.

    Returns
    -------
    Tuple[Dataset, float]
        The model-ready dataset and the median threshold used for the labels.

    """
    _raw_table_defence(table, "table")
    for col in spec.required_columns:
        _check_column_in_df(table, col)
    kept = drop_missing_target(table, spec)
    scores = pd.to_numeric(kept[spec.target_column]).to_numpy(np.float64)
    labels, threshold = binarize_target(scores)
    kept = normalise_missing(kept, spec)
    for col in spec.feature_columns:
        kept[col] = impute_mode(kept[col])
    kept[spec.label_column] = labels
    return one_hot_encode(kept, spec), threshold


def _stratified_test_counts(
    class_counts: Sequence[int], test_fraction: float
) -> Tuple[int, ...]:
    """Number of test rows drawn from each class."""
    return tuple(int(round(n * test_fraction)) for n in class_counts)


def stratified_split(
    data: Dataset, test_fraction: float = 0.2, seed: int = 42
) -> SplitDataset:
    """Split a dataset into train and test sets preserving class balance.

    Each class is shuffled under `seed` and `round(class_count *
    test_fraction)` of its rows go to the test set. Both sets keep the
    original row order.

    Parameters
    ----------
    data : Dataset
        Dataset to split.
    test_fraction : float, optional
        Fraction of each class held out, by default 0.2.
    seed : int, optional
        Shuffle seed, by default 42.

    Returns
    -------
    SplitDataset
        Disjoint train and test sets.

    Raises
    ------
    ValueError
        `test_fraction` is outside (0, 1), or a class has fewer than 2 rows.

    """
    _type_defence(data, "data", Dataset)
    _check_in_range(
        test_fraction,
        "test_fraction",
        0,
        1,
        closed_low=False,
        closed_high=False,
    )
    _type_defence(seed, "seed", int)

    rng = np.random.default_rng(seed)
    by_class = [np.flatnonzero(data.labels == c) for c in (0, 1)]
    for c, rows in enumerate(by_class):
        if len(rows) < 2:
            raise ValueError(
                f"Class {c} has {len(rows)} rows; at least 2 are needed to "
                "stratify."
            )
    n_test = _stratified_test_counts([len(r) for r in by_class], test_fraction)
    test_rows, train_rows = [], []
    for rows, k in zip(by_class, n_test):
        shuffled = rng.permutation(rows)
        test_rows.append(shuffled[:k])
        train_rows.append(shuffled[k:])

    return SplitDataset(
        train=data.subset(np.sort(np.concatenate(train_rows))),
        test=data.subset(np.sort(np.concatenate(test_rows))),
        split_seed=seed,
    )


def partition_by_school(
    data: Dataset, min_rows: int = 20, sample_size: int = 50, seed: int = 42
) -> List[ClientPartition]:
    """Partition a dataset into per-school clients.

    Schools with fewer than `min_rows` rows are discarded and `sample_size`
    of the remaining schools are sampled uniformly without replacement.

    Parameters
    ----------
    data : Dataset
        Dataset to partition, usually the training split.
    min_rows : int, optional
        Minimum rows a school needs to be eligible, by default 20.
    sample_size : int, optional
        Number of schools to sample, by default 50.
    seed : int, optional
        Sampling seed, by default 42.

    Returns
    -------
    List[ClientPartition]
        Disjoint partitions ordered by ascending school identifier.

    Raises
    ------
    ValueError
        `min_rows` or `sample_size` < 1, or fewer schools are eligible than
        `sample_size`.

    """
    _type_defence(data, "data", Dataset)
    for nm, val in {"min_rows": min_rows, "sample_size": sample_size}.items():
        _type_defence(val, nm, int)
        if val < 1:
            raise ValueError(f"`{nm}` must be >= 1. Got {val}")
    _type_defence(seed, "seed", int)

    ids, counts = np.unique(data.school_ids, return_counts=True)
    eligible = ids[counts >= min_rows]
    if len(eligible) < sample_size:
        raise ValueError(
            f"Fewer eligible schools than sample_size: {len(eligible)} "
            f"schools have >= {min_rows} rows, {sample_size} requested."
        )
    rng = np.random.default_rng(seed)
    chosen = np.sort(rng.choice(eligible, size=sample_size, replace=False))
    return [
        ClientPartition(
            client_id=int(sid),
            data=data.subset(np.flatnonzero(data.school_ids == sid)),
        )
        for sid in chosen
    ]
