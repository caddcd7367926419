"""Plain-text model checkpoints.

Layout, one record per line::

    school-performance-checkpoint v1
    layer_dims 54 64 32 1
    weight 0 <row-major values>
    bias 0 <values>
    ...

Values are written with 17 significant digits so that reading a checkpoint
back reproduces every parameter bit for bit.
"""
import pathlib
from typing import Union

import numpy as np

from school_performance.nn.model import ModelParams
from school_performance.utils.defence import (
    _check_parent_dir_exists,
    _enforce_file_extension,
    _is_expected_filetype,
    _type_defence,
)

FORMAT_TAG = "school-performance-checkpoint"
FORMAT_VERSION = "v1"


def _fmt(values: np.ndarray) -> str:
    return " ".join(format(float(v), ".17g") for v in values.ravel())


def write_checkpoint(
    model: ModelParams, path: Union[str, pathlib.Path]
) -> pathlib.Path:
    """Write model parameters to a ".txt" checkpoint.

    Parameters
    ----------
    model : ModelParams
        Parameters to store.
    path : Union[str, pathlib.Path]
        Destination; coerced to ".txt" with a warning otherwise. The parent
        directory is created when missing.

    Returns
    -------
    pathlib.Path
        The path written to.

    """
    _type_defence(model, "model", ModelParams)
    _check_parent_dir_exists(path, "path", create=True)
    path = _enforce_file_extension(
        path, exp_ext=".txt", default_ext=".txt", param_nm="path"
    )
    lines = [
        f"{FORMAT_TAG} {FORMAT_VERSION}",
        "layer_dims " + " ".join(str(d) for d in model.layer_dims),
    ]
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        lines.append(f"weight {i} {_fmt(w)}")
        lines.append(f"bias {i} {_fmt(b)}")
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")
    return path


def read_checkpoint(path: Union[str, pathlib.Path]) -> ModelParams:
    """Read model parameters written by `write_checkpoint()`.

    Raises
    ------
    FileNotFoundError
        `path` does not exist.
    ValueError
        The header or a record is malformed, or the version is unsupported.

    """
    _is_expected_filetype(path, "path", exp_ext=".txt")
    with open(path, "r", encoding="utf-8") as f:
        lines = [ln.split() for ln in f.read().splitlines() if ln.strip()]
    if not lines or lines[0][:1] != [FORMAT_TAG]:
        raise ValueError(f"{path} is not a model checkpoint.")
    if lines[0][1:] != [FORMAT_VERSION]:
        raise ValueError(
            f"Unsupported checkpoint version {lines[0][1:]} in {path}."
        )
    if lines[1][0] != "layer_dims":
        raise ValueError(f"{path}: expected 'layer_dims' on line 2.")
    dims = [int(d) for d in lines[1][1:]]
    n_layers = len(dims) - 1
    if len(lines) != 2 + 2 * n_layers:
        raise ValueError(
            f"{path}: expected {2 * n_layers} parameter records, found "
            f"{len(lines) - 2}."
        )

    weights, biases = [], []
    for i, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
        w_rec, b_rec = lines[2 + 2 * i], lines[3 + 2 * i]
        if w_rec[:2] != ["weight", str(i)] or b_rec[:2] != ["bias", str(i)]:
            raise ValueError(f"{path}: malformed records for layer {i}.")
        w = np.array([float(v) for v in w_rec[2:]], dtype=np.float64)
        b = np.array([float(v) for v in b_rec[2:]], dtype=np.float64)
        if w.size != fan_in * fan_out or b.size != fan_out:
            raise ValueError(f"{path}: layer {i} has the wrong value count.")
        weights.append(w.reshape(fan_out, fan_in))
        biases.append(b)
    return ModelParams(weights, biases)
