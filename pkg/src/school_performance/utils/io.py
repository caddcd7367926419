"""Helper functions to handle IO operations."""

import pathlib
from typing import Optional, Sequence, Union

import numpy as np
import pandas as pd

from school_performance.preprocessing.dataset import Dataset
from school_performance.utils.constants import (
    DEFAULT_DELIMITER,
    DEFAULT_FEATURE_COLUMNS,
    LABEL_COLUMN,
    SCHOOL_ID_COLUMN,
)
from school_performance.utils.defence import (
    _check_iterable,
    _check_parent_dir_exists,
    _enforce_file_extension,
    _is_expected_filetype,
    _type_defence,
)


def _first_bad_row(values: pd.Series, parsed: pd.Series) -> int:
    """Return the 1-based data row of the first unparseable cell."""
    bad = parsed.isna() & values.notna()
    return int(np.flatnonzero(bad.to_numpy())[0]) + 1


def _validate_raw_chunk(
    chunk: pd.DataFrame,
    school_id_column: str,
    target_column: str,
    missing_markers: frozenset,
    row_offset: int,
) -> None:
    """Check the school IDs are integers and the scores decimals."""
    ids = chunk[school_id_column]
    parsed_ids = pd.to_numeric(ids, errors="coerce")
    not_int = parsed_ids.isna() | (parsed_ids % 1 != 0)
    if not_int.any():
        row = int(np.flatnonzero(not_int.to_numpy())[0]) + 1 + row_offset
        raise ValueError(
            f"Column '{school_id_column}' row {row}: expected an integer "
            f"school identifier, found {ids.iloc[row - row_offset - 1]!r}."
        )

    scores = chunk[target_column]
    present = scores.notna() & ~scores.str.strip().isin(
        set(missing_markers) | {""}
    )
    parsed = pd.to_numeric(scores.where(present), errors="coerce")
    if (parsed.isna() & present).any():
        row = _first_bad_row(scores.where(present), parsed) + row_offset
        raise ValueError(
            f"Column '{target_column}' row {row}: expected a decimal score, "
            f"found {scores.iloc[row - row_offset - 1]!r}."
        )


def read_raw_table(
    path: Union[str, pathlib.Path],
    spec,
    delimiter: str = DEFAULT_DELIMITER,
    chunk_size: Optional[int] = None,
) -> pd.DataFrame:
    """Read assessment microdata, keeping only the configured columns.

    The file is streamed in chunks of `chunk_size` rows so that only the
    selected columns of a large file are ever held in memory. Every cell is
    read as text; empty cells become NaN.

    Parameters
    ----------
    path : Union[str, pathlib.Path]
        Path to a UTF-8 ".csv" file with a header row.
    spec : PipelineSpec
        Column configuration naming the school, target and feature columns.
    delimiter : str, optional
        Field delimiter, by default ";".
    chunk_size : int, optional
        Rows per chunk, by default None meaning read at once.

    Returns
    -------
    pd.DataFrame
        Raw table with the school, target and feature columns, in that
        order.

    Raises
    ------
    FileNotFoundError
        `path` does not exist.
    ValueError
        A required column is missing from the header, a school identifier
        is not an integer, or a present score is not a decimal. The message
        names the column and the 1-based data row.

    """
    _is_expected_filetype(path, "path", exp_ext=[".csv", ".txt"])
    _type_defence(delimiter, "delimiter", str)
    _type_defence(chunk_size, "chunk_size", (int, type(None)))

    columns = spec.required_columns
    header = pd.read_csv(
        path, sep=delimiter, nrows=0, encoding="utf-8"
    ).columns
    missing = [c for c in columns if c not in header]
    if missing:
        raise ValueError(
            f"Column '{missing[0]}' not found in {path}. Missing columns: "
            f"{missing}"
        )

    reader = pd.read_csv(
        path,
        sep=delimiter,
        usecols=columns,
        dtype=str,
        keep_default_na=False,
        na_values=[""],
        encoding="utf-8",
        chunksize=chunk_size,
    )
    chunks = [reader] if chunk_size is None else reader
    kept = []
    offset = 0
    for chunk in chunks:
        _validate_raw_chunk(
            chunk,
            spec.school_id_column,
            spec.target_column,
            spec.missing_markers,
            offset,
        )
        offset += len(chunk)
        kept.append(chunk[columns])
    return pd.concat(kept, ignore_index=True)


def write_frame(
    df: pd.DataFrame, path: Union[str, pathlib.Path], **kwargs
) -> pathlib.Path:
    """Write a dataframe as CSV, creating the parent directory if needed.

    Parameters
    ----------
    df : pd.DataFrame
        Frame to write. The index is not written.
    path : Union[str, pathlib.Path]
        Destination. Coerced to ".csv" with a warning otherwise.
    **kwargs
        Passed on to `pd.DataFrame.to_csv()`.

    Returns
    -------
    pathlib.Path
        The path written to.

    """
    _type_defence(df, "df", pd.DataFrame)
    _check_parent_dir_exists(path, "path", create=True)
    path = _enforce_file_extension(
        path, exp_ext=".csv", default_ext=".csv", param_nm="path"
    )
    df.to_csv(path, index=False, lineterminator="\n", **kwargs)
    return path


def write_processed(
    data: Dataset, path: Union[str, pathlib.Path]
) -> pathlib.Path:
    """Write a Dataset as the processed-file CSV.

    Columns are ID_ESCOLA, ALVO_CLASSIFICACAO, then the encoded columns in
    encoding order.
    """
    _type_defence(data, "data", Dataset)
    frame = pd.DataFrame(data.features, columns=data.feature_names)
    frame.insert(0, LABEL_COLUMN, data.labels)
    frame.insert(0, SCHOOL_ID_COLUMN, data.school_ids)
    return write_frame(frame, path)


def read_processed(
    path: Union[str, pathlib.Path],
    feature_columns: Optional[Sequence[str]] = None,
) -> Dataset:
    """Read a processed-file CSV back into a Dataset.

    The category vocabulary is rebuilt from the "<column>_<category>"
    headers by matching each header against the longest feature column it
    starts with, so category codes may themselves contain underscores.

    Parameters
    ----------
    path : Union[str, pathlib.Path]
        Processed CSV file.
    feature_columns : Sequence[str], optional
        Raw questionnaire columns the file was encoded from, by default
        None meaning the 11 default columns.

    Returns
    -------
    Dataset
        The encoded dataset with its vocabulary.

    Raises
    ------
    ValueError
        The file lacks the ID_ESCOLA or ALVO_CLASSIFICACAO columns, or an
        encoded header matches none of `feature_columns`.

    """
    _is_expected_filetype(path, "path", exp_ext=".csv")
    if feature_columns is None:
        feature_columns = DEFAULT_FEATURE_COLUMNS
    _check_iterable(feature_columns, "feature_columns", (list, tuple))
    frame = pd.read_csv(path)
    for col in (SCHOOL_ID_COLUMN, LABEL_COLUMN):
        if col not in frame.columns:
            raise ValueError(f"Column '{col}' not found in {path}.")
    names = [
        c for c in frame.columns if c not in (SCHOOL_ID_COLUMN, LABEL_COLUMN)
    ]
    by_length = sorted(feature_columns, key=len, reverse=True)
    categories = {}
    for name in names:
        col = next((c for c in by_length if name.startswith(f"{c}_")), None)
        if col is None:
            raise ValueError(
                f"Encoded column '{name}' matches none of the feature "
                f"columns {list(feature_columns)}."
            )
        categories.setdefault(col, []).append(name[len(col) + 1 :])
    return Dataset(
        features=frame[names].to_numpy(dtype=np.uint8),
        labels=frame[LABEL_COLUMN].to_numpy(dtype=np.int64),
        school_ids=frame[SCHOOL_ID_COLUMN].to_numpy(dtype=np.int64),
        feature_names=names,
        categories={k: tuple(v) for k, v in categories.items()},
    )
