"""Model-ready containers shared by the centralised and federated arms."""
from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy as np


@dataclass(frozen=True)
class Dataset:
    """One-hot encoded features with binary labels and per-row school IDs.

    Parameters
    ----------
    features : np.ndarray
        Dense {0, 1} matrix of shape (rows, encoded width), stored as uint8.
    labels : np.ndarray
        Binary target vector (int64).
    school_ids : np.ndarray
        Integer school identifier per row (int64).
    feature_names : list
        "<column>_<category>" name of every encoded column.
    categories : dict, optional
        Ordered category vocabulary per original column, as learnt at encode
        time. Used to re-encode held-out data and to decode.

    Raises
    ------
    ValueError
        Row counts of `features`, `labels` and `school_ids` differ, or the
        feature names do not match the encoded width.

    """

    features: np.ndarray
    labels: np.ndarray
    school_ids: np.ndarray
    feature_names: List[str]
    categories: Dict[str, Tuple[str, ...]] = field(default_factory=dict)

    def __post_init__(self):
        if self.features.ndim != 2:
            raise ValueError(
                "`features` expected a 2-d matrix. Got "
                f"{self.features.ndim} dimensions."
            )
        n_rows = self.features.shape[0]
        if len(self.labels) != n_rows or len(self.school_ids) != n_rows:
            raise ValueError(
                f"`features` has {n_rows} rows, `labels` "
                f"{len(self.labels)} and `school_ids` {len(self.school_ids)}."
            )
        if len(self.feature_names) != self.features.shape[1]:
            raise ValueError(
                f"{len(self.feature_names)} feature names given for an "
                f"encoded width of {self.features.shape[1]}."
            )

    @property
    def n_rows(self) -> int:
        """Number of rows (students)."""
        return self.features.shape[0]

    @property
    def width(self) -> int:
        """Encoded feature width."""
        return self.features.shape[1]

    def subset(self, rows: np.ndarray) -> "Dataset":
        """Return the rows at positional indices `rows` as a new Dataset."""
        rows = np.asarray(rows, dtype=np.int64)
        return Dataset(
            features=self.features[rows],
            labels=self.labels[rows],
            school_ids=self.school_ids[rows],
            feature_names=list(self.feature_names),
            categories=dict(self.categories),
        )

    def class_counts(self) -> Tuple[int, int]:
        """Return the (class 0, class 1) row counts."""
        ones = int(self.labels.sum())
        return self.n_rows - ones, ones


@dataclass(frozen=True)
class SplitDataset:
    """Stratified train/test partition of a Dataset."""

    train: Dataset
    test: Dataset
    split_seed: int


@dataclass(frozen=True)
class ClientPartition:
    """One school's private slice of the training data.

    Parameters
    ----------
    client_id : int
        The school identifier.
    data : Dataset
        The school's rows. Only the owning client reads these.

    """

    client_id: int
    data: Dataset

    @property
    def n_k(self) -> int:
        """Number of local samples, the client's aggregation weight."""
        return self.data.n_rows
