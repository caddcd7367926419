"""Experiment configuration read from a single TOML file.

Section and key names are upper case, as in the pipeline configs::

    [DATA]        PATH, DELIMITER, CHUNK_SIZE
    [SYNTHETIC]   SCHOOLS, ROWS_PER_SCHOOL, HETEROGENEITY, NOISE,
                  MISSING_RATE, SEED
    [PIPELINE]    SCHOOL_ID_COLUMN, TARGET_COLUMN, FEATURE_COLUMNS,
                  MISSING_MARKERS
    [SPLIT]       TEST_FRACTION, SEED, MIN_ROWS, CLIENTS, PARTITION_SEED
    [TRAINING]    LEARNING_RATE, BATCH_SIZE, LOCAL_EPOCHS, SEED
    [FEDERATION]  ROUNDS, FRACTION_FIT, MIN_FIT_CLIENTS, PROXIMAL_MU,
                  HIDDEN_DIMS, STRATEGY, SEED, N_JOBS
    [BOOSTING]    N_TREES, MAX_DEPTH, ETA, LAMBDA, GAMMA, MIN_CHILD_WEIGHT,
                  SEED
    [OUTPUT]      DIR, CHECKPOINTS, TOP_FEATURES
    [UTILS]       PROFILING, PROGRESS

Exactly one of DATA.PATH and a [SYNTHETIC] section must be given. Missing
keys take the defaults of the experimental setup (50 clients of at least 20
rows, hidden layers 64 and 32, 20 rounds of 10 local epochs, mu = 0.1).
"""
import pathlib
from dataclasses import dataclass, field, replace
from typing import Optional, Tuple, Union

import toml
from pyprojroot import here

from school_performance.federated.server import FederationConfig
from school_performance.gbdt.booster import BoostConfig
from school_performance.nn.training import TrainConfig
from school_performance.preprocessing.pipeline import PipelineSpec
from school_performance.utils.constants import DEFAULT_DELIMITER
from school_performance.utils.defence import (
    _check_in_range,
    _is_expected_filetype,
    _type_defence,
)

SECTIONS = (
    "DATA",
    "SYNTHETIC",
    "PIPELINE",
    "SPLIT",
    "TRAINING",
    "FEDERATION",
    "BOOSTING",
    "OUTPUT",
    "UTILS",
)


@dataclass(frozen=True)
class SyntheticSpec:
    """Arguments of `generate_synthetic()` taken from [SYNTHETIC]."""

    schools: int = 50
    rows_per_school: Tuple[int, int] = (40, 60)
    heterogeneity: float = 0.5
    noise: float = 0.5
    missing_rate: float = 0.0
    seed: int = 42

    def __post_init__(self):
        object.__setattr__(
            self, "rows_per_school", tuple(self.rows_per_school)
        )


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a command needs, mirroring the experimental setup table.

    Parameters
    ----------
    data_path : pathlib.Path, optional
        Raw microdata file. Mutually exclusive with `synthetic`.
    synthetic : SyntheticSpec, optional
        Synthetic data settings. Mutually exclusive with `data_path`.
    pipeline : PipelineSpec
        Column configuration.
    delimiter : str
        Raw file delimiter.
    chunk_size : int, optional
        Rows per chunk when streaming the raw file, None reads at once.
    test_fraction : float
        Held-out share of the stratified split.
    split_seed : int
        Seed of the stratified split.
    min_rows : int
        Minimum training rows for a school to be an eligible client.
    clients : int
        Number of schools sampled as clients.
    partition_seed : int
        Seed of the school sampling.
    federation : FederationConfig
        Federated run settings, including local training.
    boosting : BoostConfig
        Centralized benchmark settings.
    out_dir : pathlib.Path
        Directory receiving every output file.
    checkpoints : bool
        Write the global model of every federated round.
    top_features : int
        Rows of the feature-importance table.
    profiling : bool
        Print phase timings.
    progress : bool
        Show tqdm progress bars.

    Raises
    ------
    ValueError
        Both or neither of `data_path` and `synthetic` are set.

    """

    data_path: Optional[pathlib.Path] = None
    synthetic: Optional[SyntheticSpec] = None
    pipeline: PipelineSpec = field(default_factory=PipelineSpec)
    delimiter: str = DEFAULT_DELIMITER
    chunk_size: Optional[int] = None
    test_fraction: float = 0.2
    split_seed: int = 42
    min_rows: int = 20
    clients: int = 50
    partition_seed: int = 42
    federation: FederationConfig = field(default_factory=FederationConfig)
    boosting: BoostConfig = field(default_factory=BoostConfig)
    out_dir: pathlib.Path = pathlib.Path("outputs")
    checkpoints: bool = False
    top_features: int = 15
    profiling: bool = False
    progress: bool = False

    def __post_init__(self):
        if (self.data_path is None) == (self.synthetic is None):
            raise ValueError(
                "Exactly one of DATA.PATH and a [SYNTHETIC] section must be "
                "configured."
            )
        _type_defence(self.pipeline, "pipeline", PipelineSpec)
        _type_defence(self.federation, "federation", FederationConfig)
        _type_defence(self.boosting, "boosting", BoostConfig)
        _check_in_range(
            self.test_fraction,
            "test_fraction",
            0,
            1,
            closed_low=False,
            closed_high=False,
        )
        for nm in ("split_seed", "min_rows", "clients", "partition_seed"):
            _type_defence(getattr(self, nm), nm, int)
        _type_defence(self.chunk_size, "chunk_size", (int, type(None)))
        object.__setattr__(self, "out_dir", pathlib.Path(self.out_dir))

    def with_seed(self, seed: int) -> "ExperimentConfig":
        """Copy with every seed of the experiment set to `seed`."""
        _type_defence(seed, "seed", int)
        federation = replace(
            self.federation,
            seed=seed,
            train_config=replace(self.federation.train_config, seed=seed),
        )
        synthetic = (
            None
            if self.synthetic is None
            else replace(self.synthetic, seed=seed)
        )
        return replace(
            self,
            synthetic=synthetic,
            split_seed=seed,
            partition_seed=seed,
            federation=federation,
            boosting=replace(self.boosting, seed=seed),
        )


def _resolve(pth: Union[str, pathlib.Path]) -> pathlib.Path:
    """Resolve a relative path against the project root."""
    pth = pathlib.Path(pth)
    return pth if pth.is_absolute() else here(pth)


def _pick(section: dict, mapping: dict) -> dict:
    """Translate present TOML keys into keyword arguments."""
    return {kw: section[key] for key, kw in mapping.items() if key in section}


def config_from_dict(raw: dict) -> ExperimentConfig:
    """Build an ExperimentConfig from parsed TOML content.

    Raises
    ------
    ValueError
        An unknown section is present, or a value is invalid.
    TypeError
        A value has the wrong type.

    """
    _type_defence(raw, "raw", dict)
    unknown = [
        k for k, v in raw.items() if isinstance(v, dict) and k not in SECTIONS
    ]
    if unknown:
        raise ValueError(
            f"Unknown config section(s) {unknown}. Expected {list(SECTIONS)}"
        )
    data = raw.get("DATA", {})
    split = raw.get("SPLIT", {})
    output = raw.get("OUTPUT", {})
    utils = raw.get("UTILS", {})

    synthetic = None
    if "SYNTHETIC" in raw:
        synthetic = SyntheticSpec(
            **_pick(
                raw["SYNTHETIC"],
                {
                    "SCHOOLS": "schools",
                    "ROWS_PER_SCHOOL": "rows_per_school",
                    "HETEROGENEITY": "heterogeneity",
                    "NOISE": "noise",
                    "MISSING_RATE": "missing_rate",
                    "SEED": "seed",
                },
            )
        )
    pipeline = PipelineSpec(
        **_pick(
            raw.get("PIPELINE", {}),
            {
                "SCHOOL_ID_COLUMN": "school_id_column",
                "TARGET_COLUMN": "target_column",
                "FEATURE_COLUMNS": "feature_columns",
                "MISSING_MARKERS": "missing_markers",
            },
        )
    )
    train_config = TrainConfig(
        **_pick(
            raw.get("TRAINING", {}),
            {
                "LEARNING_RATE": "learning_rate",
                "BATCH_SIZE": "batch_size",
                "LOCAL_EPOCHS": "local_epochs",
                "SEED": "seed",
            },
        )
    )
    federation = FederationConfig(
        train_config=train_config,
        **_pick(
            raw.get("FEDERATION", {}),
            {
                "ROUNDS": "num_rounds",
                "FRACTION_FIT": "fraction_fit",
                "MIN_FIT_CLIENTS": "min_fit_clients",
                "PROXIMAL_MU": "proximal_mu",
                "HIDDEN_DIMS": "hidden_dims",
                "STRATEGY": "strategy",
                "SEED": "seed",
                "N_JOBS": "n_jobs",
            },
        ),
    )
    boosting = BoostConfig(
        **_pick(
            raw.get("BOOSTING", {}),
            {
                "N_TREES": "n_trees",
                "MAX_DEPTH": "max_depth",
                "ETA": "eta",
                "LAMBDA": "reg_lambda",
                "GAMMA": "gamma",
                "MIN_CHILD_WEIGHT": "min_child_weight",
                "SEED": "seed",
            },
        )
    )
    return ExperimentConfig(
        data_path=_resolve(data["PATH"]) if "PATH" in data else None,
        synthetic=synthetic,
        pipeline=pipeline,
        delimiter=data.get("DELIMITER", DEFAULT_DELIMITER),
        chunk_size=data.get("CHUNK_SIZE"),
        test_fraction=split.get("TEST_FRACTION", 0.2),
        split_seed=split.get("SEED", 42),
        min_rows=split.get("MIN_ROWS", 20),
        clients=split.get("CLIENTS", 50),
        partition_seed=split.get("PARTITION_SEED", 42),
        federation=federation,
        boosting=boosting,
        out_dir=_resolve(output.get("DIR", "outputs")),
        checkpoints=output.get("CHECKPOINTS", False),
        top_features=output.get("TOP_FEATURES", 15),
        profiling=utils.get("PROFILING", False),
        progress=utils.get("PROGRESS", False),
    )


def load_config(path: Union[str, pathlib.Path]) -> ExperimentConfig:
    """Load an experiment configuration from a ".toml" file.

    Relative paths inside the file resolve against the project root.

    Raises
    ------
    FileNotFoundError
        `path` does not exist.
    ValueError
        The file is not valid TOML or holds invalid settings.

    """
    _is_expected_filetype(path, "path", exp_ext=".toml")
    try:
        raw = toml.load(path)
    except toml.TomlDecodeError as err:
        raise ValueError(f"{path} is not valid TOML: {err}") from err
    return config_from_dict(raw)
