"""Defensive check utility funcs. Internals only."""
from typing import Union
from collections.abc import Iterable

import numbers
import os
import pathlib
import warnings

import numpy as np
import pandas as pd


def _handle_path_like(
    pth: Union[str, pathlib.Path], param_nm: str
) -> pathlib.Path:
    """Handle path-like parameter values.

    Converts to a realpath (no symlinks, not relative) and returns a platform
    agnostic pathlib.Path.

    Parameters
    ----------
    pth : (str, pathlib.Path)
        The path to check.
    param_nm : str
        The name of the parameter being tested.

    Raises
    ------
    TypeError: `pth` is not either of string or pathlib.Path.

    Returns
    -------
    pathlib.Path
        Resolved representation of `pth`.

    """
    if not isinstance(pth, (str, pathlib.Path)):
        raise TypeError(f"`{param_nm}` expected path-like, found {type(pth)}.")

    # Convert backslashes to forward slashes for Windows paths
    pth_str = str(pth).replace("\\", "/")
    return pathlib.Path(os.path.realpath(pth_str))


def _check_parent_dir_exists(
    pth: Union[str, pathlib.Path], param_nm: str, create: bool = False
) -> None:
    """Check if a files parent directory exists.

    Parameters
    ----------
    pth : Union[str, pathlib.Path]
        The path to the file who's parent dir is being confirmed to exist.
    param_nm : str
        The name of the parameter for the path.
    create : bool, optional
        Whether or not to create the parent directory if it does not already
        exist, by default False

    Raises
    ------
    FileNotFoundError
        The parent directory could not be found and `create` is False.

    """
    pth = _handle_path_like(pth, param_nm)
    parent = os.path.dirname(pth)
    if not os.path.exists(parent):
        if create:
            os.makedirs(parent)
            print(f"Creating parent directory: {parent}")
        else:
            raise FileNotFoundError(
                f"Parent directory {parent} not found on disk."
            )

    return None


def _is_expected_filetype(
    pth: Union[pathlib.Path, str],
    param_nm: str,
    check_existing: bool = True,
    exp_ext: Union[str, list] = ".csv",
) -> None:
    """Handle file paths that should be existing filetypes.

    Parameters
    ----------
    pth : (str, pathlib.Path)
        The path to check.
    param_nm : str
        The name of the parameter being tested. Helps with debugging.
    check_existing : bool
        Whether to check if the file already exists. Defaults to True.
    exp_ext: (str, list)
        The expected file extension, or a list of them. A missing leading "."
        is prepended with a warning.

    Raises
    ------
    TypeError: `pth` is not either of string or pathlib.Path.
    FileNotFoundError: `pth` does not exist on disk.
    ValueError: `pth` does not have the expected file extension(s).

    """
    _type_defence(pth, "pth", (str, pathlib.Path))
    _type_defence(param_nm, "param_nm", str)
    _type_defence(check_existing, "check_existing", bool)
    _type_defence(exp_ext, "exp_ext", (str, list))
    pth = _handle_path_like(pth=pth, param_nm=param_nm)
    ext = os.path.splitext(pth)[1].lower()
    # catch cases where directories are passed. eg no file stem.
    if ext == "":
        raise ValueError(f"No file extension was found in {pth}.")

    expected = [exp_ext] if isinstance(exp_ext, str) else list(exp_ext)
    for i, e in enumerate(expected):
        e = e.lower()
        if not e.startswith("."):
            warnings.warn(
                UserWarning(f"'.' was prepended to `exp_ext` value '{e}'.")
            )
            e = "." + e
        expected[i] = e

    if check_existing and not os.path.exists(pth):
        raise FileNotFoundError(f"{pth} not found on file.")

    if ext not in expected:
        raise ValueError(
            f"`{param_nm}` expected file extension {exp_ext}. Found {ext}"
        )

    return None


def _type_defence(some_object, param_nm, types) -> None:
    """Defence checking utility. Can handle NoneType.

    Parameters
    ----------
    some_object : Any
        Object to test with isinstance.
    param_nm : str
        A name for the parameter, presented in the error message.
    types : type or tuple
        A type or a tuple of types to test `some_object` against.

    Raises
    ------
    TypeError
        `some_object` is not of type `types`.

    """
    if not isinstance(some_object, types):
        raise TypeError(
            f"`{param_nm}` expected {types}. Got {type(some_object)}"
        )

    return None


def _check_iterable(
    iterable: Iterable,
    param_nm: str,
    iterable_type: type,
    check_elements: bool = True,
    exp_type: Union[tuple, type] = str,
) -> None:
    """Check an iterable and its elements for type.

    Parameters
    ----------
    iterable : Iterable
        Iterable to check.
    param_nm : str
        Name of the parameter being checked.
    iterable_type : type
        Expected iterable type.
    check_elements : bool, optional
        Whether to check the element types. Defaults to True.
    exp_type : Union[tuple, type], optional:
        The expected type of the elements. Defaults to str.

    Raises
    ------
        TypeError
            `iterable` is not of `iterable_type`, or its elements are not of
            the expected type(s).

    """
    _type_defence(iterable, param_nm, Iterable)
    _type_defence(iterable_type, "iterable_type", (type, tuple))
    _type_defence(iterable, param_nm, iterable_type)

    if check_elements:
        for i in iterable:
            if not isinstance(i, exp_type):
                raise TypeError(
                    f"`{param_nm}` must contain {str(exp_type)} only."
                    f" Found {type(i)} : {i}"
                )

    return None


def _check_column_in_df(df: pd.DataFrame, column_name: str) -> None:
    """Defences to check that a column exists in a df.

    Raises
    ------
    IndexError
        The column (column_name) does not exist in the dataframe.

    """
    if column_name not in df.columns:
        raise IndexError(f"'{column_name}' is not a column in the dataframe.")

    return None


def _check_item_in_iter(item, iterable: Iterable, param_nm: str) -> None:
    """Defence to check if an item is present in an iterable.

    Raises
    ------
    ValueError
        Error raised when item not in the iterable.

    """
    _type_defence(iterable, param_nm, Iterable)

    if item not in iterable:
        raise ValueError(
            f"'{param_nm}' expected one of the following: "
            f"{iterable}. Got {item}: {type(item)}"
        )
    return None


def _enforce_file_extension(
    path: Union[str, pathlib.Path],
    exp_ext: Union[str, list],
    default_ext: str,
    param_nm: str,
) -> pathlib.Path:
    """Coerce a filepath onto an accepted extension, warning if it changes.

    Parameters
    ----------
    path : Union[str, pathlib.Path]
        The filepath to check the extension of.
    exp_ext : Union[str, list]
        The accepted extension(s).
    default_ext : str
        The extension to fall back on when the extension is not accepted.
    param_nm : str
        The name of the parameter that the path was passed to.

    Returns
    -------
    pathlib.Path
        The path with an accepted file extension.

    """
    _handle_path_like(path, param_nm)
    root, ext = os.path.splitext(path)
    if isinstance(exp_ext, str):
        exp_ext = [exp_ext]
    exp_ext = [x.replace(".", "").lower() for x in exp_ext]
    default_ext = default_ext.replace(".", "")
    ext = ext.replace(".", "")
    if ext.lower() not in exp_ext:
        warnings.warn(
            f"Format .{ext} provided. Expected {exp_ext} for path given "
            f"to '{param_nm}'. Path defaulted to .{default_ext}",
            UserWarning,
        )
        path = os.path.normpath(root + f".{default_ext}")
    return pathlib.Path(path)


def _check_positive(
    value: numbers.Real, param_nm: str, allow_zero: bool = False
) -> None:
    """Check a scalar is a (non-negative when `allow_zero`) real number.

    Raises
    ------
    TypeError
        `value` is not a real number (bools are rejected).
    ValueError
        `value` is not strictly positive, or negative when `allow_zero`.

    """
    if isinstance(value, bool) or not isinstance(value, numbers.Real):
        raise TypeError(
            f"`{param_nm}` expected a real number. Got {type(value)}"
        )
    if not np.isfinite(value):
        raise ValueError(f"`{param_nm}` must be finite. Got {value}")
    if allow_zero and value < 0:
        raise ValueError(f"`{param_nm}` must be >= 0. Got {value}")
    if not allow_zero and value <= 0:
        raise ValueError(f"`{param_nm}` must be > 0. Got {value}")
    return None


def _check_in_range(
    value: numbers.Real,
    param_nm: str,
    low: float,
    high: float,
    closed_low: bool = True,
    closed_high: bool = True,
) -> None:
    """Check a real scalar lies within an interval.

    Raises
    ------
    TypeError
        `value` is not a real number.
    ValueError
        `value` lies outside the interval.

    """
    if isinstance(value, bool) or not isinstance(value, numbers.Real):
        raise TypeError(
            f"`{param_nm}` expected a real number. Got {type(value)}"
        )
    above = value >= low if closed_low else value > low
    below = value <= high if closed_high else value < high
    if not (above and below):
        lb = "[" if closed_low else "("
        rb = "]" if closed_high else ")"
        raise ValueError(
            f"`{param_nm}` must be in {lb}{low}, {high}{rb}. Got {value}"
        )
    return None


def _check_same_length(first, second, first_nm: str, second_nm: str) -> None:
    """Check two sized objects share a length.

    Raises
    ------
    ValueError
        The lengths differ.

    """
    if len(first) != len(second):
        raise ValueError(
            f"`{first_nm}` has length {len(first)} but `{second_nm}` has "
            f"length {len(second)}."
        )
    return None


def _check_binary_vector(values: np.ndarray, param_nm: str) -> np.ndarray:
    """Coerce a vector of 0/1 labels to an int64 numpy array.

    Raises
    ------
    ValueError
        `values` is not one dimensional, or holds values other than 0 and 1.

    """
    arr = np.asarray(values)
    if arr.ndim != 1:
        raise ValueError(
            f"`{param_nm}` expected a 1-d vector. Got {arr.ndim} dimensions."
        )
    if arr.size and not np.isin(arr, (0, 1)).all():
        raise ValueError(f"`{param_nm}` must only contain 0 and 1.")
    return arr.astype(np.int64)


def _raw_table_defence(table: pd.DataFrame, param_nm: str) -> None:
    """Check a raw table is a DataFrame with unique column names.

    Raises
    ------
    TypeError
        `table` is not a pandas DataFrame.
    ValueError
        Column names are duplicated.

    """
    _type_defence(table, param_nm, pd.DataFrame)
    dupes = table.columns[table.columns.duplicated()].tolist()
    if dupes:
        raise ValueError(f"`{param_nm}` has duplicated columns: {dupes}")
    return None
