"""Server side of the federated simulation.

The round loop only ever handles (parameters, sample count) pairs coming
back from clients: raw rows stay inside `ClientPartition` and are read by
the client-owned `_client_fit()` call alone.
"""
import pathlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from tqdm import tqdm

from school_performance.metrics import RoundMetrics, evaluate
from school_performance.nn.checkpoint import write_checkpoint
from school_performance.nn.model import (
    ModelParams,
    _check_congruent,
    forward,
    init_model,
)
from school_performance.nn.training import TrainConfig, train_local
from school_performance.preprocessing.dataset import ClientPartition, Dataset
from school_performance.utils.defence import (
    _check_in_range,
    _check_item_in_iter,
    _check_positive,
    _type_defence,
)

STRATEGIES = ("fedprox", "fedavg")
# rows per forward pass when scoring the global test set
_EVAL_CHUNK = 65536


@dataclass(frozen=True)
class FederationConfig:
    """Settings of a federated run.

    Parameters
    ----------
    num_rounds : int
        Communication rounds T, by default 20.
    fraction_fit : float
        Share of clients sampled per round, in (0, 1], by default 0.2.
    min_fit_clients : int
        Floor on the clients sampled per round, by default 10.
    proximal_mu : float
        FedProx proximal weight, by default 0.1. Overrides the value held by
        `train_config`.
    train_config : TrainConfig
        Local optimisation settings.
    seed : int
        Seed for model initialisation and client sampling, by default 42.
    hidden_dims : tuple
        Hidden layer widths, by default (64, 32).
    strategy : str
        "fedprox" or "fedavg"; "fedavg" trains without the proximal term.
    n_jobs : int
        Client trainings run concurrently per round, by default 1. Results
        are identical for any value.

    """

    num_rounds: int = 20
    fraction_fit: float = 0.2
    min_fit_clients: int = 10
    proximal_mu: float = 0.1
    train_config: TrainConfig = field(default_factory=TrainConfig)
    seed: int = 42
    hidden_dims: Tuple[int, ...] = (64, 32)
    strategy: str = "fedprox"
    n_jobs: int = 1

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(self.hidden_dims))
        _type_defence(self.num_rounds, "num_rounds", int)
        if self.num_rounds < 0:
            raise ValueError(
                f"`num_rounds` must be >= 0. Got {self.num_rounds}"
            )
        _check_in_range(
            self.fraction_fit, "fraction_fit", 0, 1, closed_low=False
        )
        for nm in ("min_fit_clients", "n_jobs"):
            _type_defence(getattr(self, nm), nm, int)
            if getattr(self, nm) < 1:
                raise ValueError(
                    f"`{nm}` must be >= 1. Got {getattr(self, nm)}"
                )
        _check_positive(self.proximal_mu, "proximal_mu", allow_zero=True)
        _type_defence(self.train_config, "train_config", TrainConfig)
        _type_defence(self.seed, "seed", int)
        _check_item_in_iter(self.strategy, STRATEGIES, "strategy")

    @property
    def local_config(self) -> TrainConfig:
        """TrainConfig the clients run with, carrying the strategy's mu."""
        mu = 0.0 if self.strategy == "fedavg" else self.proximal_mu
        return replace(self.train_config, proximal_mu=mu)


@dataclass(frozen=True)
class RoundRecord:
    """Global model and test-set metrics after one round's aggregation."""

    round: int
    global_model: ModelParams
    metrics: RoundMetrics
    participating_clients: List[int]


def select_clients(
    clients: Sequence[ClientPartition],
    config: FederationConfig,
    round_num: int,
) -> List[ClientPartition]:
    """Sample the clients taking part in a round.

    max(round(fraction_fit * K), min_fit_clients) clients are drawn
    uniformly without replacement under (seed, round).

    Returns
    -------
    List[ClientPartition]
        Selected clients ordered by ascending client_id.

    Raises
    ------
    ValueError
        `clients` is empty or fewer than the requested count.

    """
    _type_defence(config, "config", FederationConfig)
    if len(clients) == 0:
        raise ValueError("`clients` must not be empty.")
    n_select = max(
        int(round(config.fraction_fit * len(clients))), config.min_fit_clients
    )
    if n_select > len(clients):
        raise ValueError(
            f"{n_select} clients requested per round but only "
            f"{len(clients)} are available."
        )
    rng = np.random.default_rng([config.seed, round_num])
    chosen = rng.choice(len(clients), size=n_select, replace=False)
    return sorted((clients[i] for i in chosen), key=lambda c: c.client_id)


def aggregate(updates: Sequence[Tuple[ModelParams, int]]) -> ModelParams:
    """Sample-weighted average of client parameters.

    Computes sum_k (n_k / N) * w_k with N = sum_k n_k, summing in the order
    given; callers pass updates sorted by client_id.

    Raises
    ------
    ValueError
        `updates` is empty, a count is not positive, or shapes differ.

    Examples
    --------
    >>> w1 = ModelParams([[[1.0, 2.0]]], [[0.0]])
    >>> w2 = ModelParams([[[4.0, 5.0]]], [[0.0]])
    >>> aggregate([(w1, 1), (w2, 3)]).weights[0].tolist()
    [[3.25, 4.25]]

    """
    if len(updates) == 0:
        raise ValueError("`updates` must not be empty.")
    first = updates[0][0]
    for params, n_k in updates:
        _check_congruent(first, params, "updates[0]", "update")
        _type_defence(n_k, "n_k", (int, np.integer))
        if n_k <= 0:
            raise ValueError(f"`n_k` must be > 0. Got {n_k}")
    total = sum(int(n_k) for _, n_k in updates)

    weights = [np.zeros_like(w) for w in first.weights]
    biases = [np.zeros_like(b) for b in first.biases]
    for params, n_k in updates:
        share = n_k / total
        for i, (w, b) in enumerate(zip(params.weights, params.biases)):
            weights[i] += share * w
            biases[i] += share * b
    return ModelParams(weights, biases)


def _client_fit(
    client: ClientPartition,
    global_model: ModelParams,
    config: TrainConfig,
    round_num: int,
) -> Tuple[ModelParams, int]:
    """Client-owned training call, returns only (parameters, n_k)."""
    params = train_local(
        global_model, client, global_model, config, round_num=round_num
    )
    return params, client.n_k


def run_round(
    global_model: ModelParams,
    clients: Sequence[ClientPartition],
    config: FederationConfig,
    round_num: int,
) -> Tuple[ModelParams, List[int]]:
    """Broadcast, train locally, and aggregate one round.

    Each selected client trains from the incoming global model, which is
    also its proximal anchor. The incoming model is not modified.

    Returns
    -------
    Tuple[ModelParams, List[int]]
        The aggregated global model and the participating client IDs.

    """
    _type_defence(global_model, "global_model", ModelParams)
    _type_defence(config, "config", FederationConfig)
    selected = select_clients(clients, config, round_num)
    local_config = config.local_config

    def fit(client):
        return _client_fit(client, global_model, local_config, round_num)

    if config.n_jobs > 1:
        with ThreadPoolExecutor(max_workers=config.n_jobs) as pool:
            updates = list(pool.map(fit, selected))
    else:
        updates = [fit(c) for c in selected]
    return aggregate(updates), [c.client_id for c in selected]


def predict_global(model: ModelParams, test_set: Dataset) -> np.ndarray:
    """Class-1 probabilities of a global model on the held-out test set."""
    _type_defence(test_set, "test_set", Dataset)
    if test_set.n_rows == 0:
        raise ValueError("`test_set` must not be empty.")
    return np.concatenate(
        [
            forward(model, test_set.features[i : i + _EVAL_CHUNK])
            for i in range(0, test_set.n_rows, _EVAL_CHUNK)
        ]
    )


def evaluate_global(model: ModelParams, test_set: Dataset) -> RoundMetrics:
    """Score a global model on the held-out test set."""
    probs = predict_global(model, test_set)
    return evaluate(probs, (probs > 0.5).astype(np.int64), test_set.labels)


def run_federation(
    clients: Sequence[ClientPartition],
    test_set: Dataset,
    config: FederationConfig,
    progress: bool = False,
    checkpoint_dir: Optional[Union[str, pathlib.Path]] = None,
) -> List[RoundRecord]:
    """Run the full federated simulation.

    The global model is initialised from `config.seed`; after each round's
    aggregation it is evaluated on `test_set`, which must not share rows
    with any client.

    Parameters
    ----------
    clients : Sequence[ClientPartition]
        All client partitions.
    test_set : Dataset
        Global held-out test set.
    config : FederationConfig
        Run settings.
    progress : bool, optional
        Show a tqdm progress bar, by default False.
    checkpoint_dir : Union[str, pathlib.Path], optional
        When given, the global model of every round is written there as
        "round_001.txt", "round_002.txt" and so on. By default None.

    Returns
    -------
    List[RoundRecord]
        One record per round, in order.

    Raises
    ------
    ValueError
        Client and test feature widths differ.

    """
    _type_defence(test_set, "test_set", Dataset)
    _type_defence(config, "config", FederationConfig)
    for client in clients:
        if client.data.width != test_set.width:
            raise ValueError(
                f"Client {client.client_id} has {client.data.width} features, "
                f"the test set {test_set.width}."
            )
    global_model = init_model(
        [test_set.width, *config.hidden_dims, 1], seed=config.seed
    )
    history = []
    rounds = tqdm(
        range(1, config.num_rounds + 1),
        total=config.num_rounds,
        disable=not progress,
    )
    for t in rounds:
        global_model, participants = run_round(
            global_model, clients, config, t
        )
        metrics = evaluate_global(global_model, test_set)
        rounds.set_description(f"Round {t}: accuracy {metrics.accuracy:.4f}")
        if checkpoint_dir is not None:
            write_checkpoint(
                global_model,
                pathlib.Path(checkpoint_dir) / f"round_{t:03d}.txt",
            )
        history.append(RoundRecord(t, global_model, metrics, participants))
    return history


def best_round(history: Sequence[RoundRecord]) -> Tuple[int, float]:
    """Round with the highest test accuracy, the earliest on ties.

    Raises
    ------
    ValueError
        `history` is empty.

    """
    if len(history) == 0:
        raise ValueError("`history` must not be empty.")
    accuracies = [r.metrics.accuracy for r in history]
    best = int(np.argmax(accuracies))
    return history[best].round, accuracies[best]


def history_to_frame(history: Sequence[RoundRecord]) -> pd.DataFrame:
    """Tabulate a round history for export.

    Columns: round, accuracy, precision, recall, f1, loss,
    participating_client_ids (semicolon-joined).
    """
    return pd.DataFrame(
        [
            {
                "round": r.round,
                "accuracy": r.metrics.accuracy,
                "precision": r.metrics.precision,
                "recall": r.metrics.recall,
                "f1": r.metrics.f1,
                "loss": r.metrics.loss,
                "participating_client_ids": ";".join(
                    str(c) for c in r.participating_clients
                ),
            }
            for r in history
        ],
        columns=[
            "round",
            "accuracy",
            "precision",
            "recall",
            "f1",
            "loss",
            "participating_client_ids",
        ],
    )
