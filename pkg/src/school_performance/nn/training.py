"""Client-side FedProx training."""
from dataclasses import dataclass

import numpy as np

from school_performance.nn.model import (
    ModelParams,
    _check_congruent,
    backward,
    bce_loss,
    forward,
    proximal_grad,
    sgd_step,
)
from school_performance.preprocessing.dataset import ClientPartition
from school_performance.utils.defence import _check_positive, _type_defence


@dataclass(frozen=True)
class TrainConfig:
    """Local optimisation settings.

    Parameters
    ----------
    learning_rate : float
        SGD step size, by default 0.01.
    batch_size : int
        Mini-batch size, by default 32.
    local_epochs : int
        Passes over the local data per round, by default 10. 0 leaves the
        model untouched.
    proximal_mu : float
        Weight of the proximal term, by default 0.1. 0 gives plain SGD.
    seed : int
        Base seed for the per-epoch shuffles, by default 42.

    """

    learning_rate: float = 0.01
    batch_size: int = 32
    local_epochs: int = 10
    proximal_mu: float = 0.1
    seed: int = 42

    def __post_init__(self):
        _check_positive(self.learning_rate, "learning_rate")
        _type_defence(self.batch_size, "batch_size", int)
        _type_defence(self.local_epochs, "local_epochs", int)
        _type_defence(self.seed, "seed", int)
        if self.batch_size < 1:
            raise ValueError(
                f"`batch_size` must be >= 1. Got {self.batch_size}"
            )
        if self.local_epochs < 0:
            raise ValueError(
                f"`local_epochs` must be >= 0. Got {self.local_epochs}"
            )
        _check_positive(self.proximal_mu, "proximal_mu", allow_zero=True)


def fedprox_objective(
    model: ModelParams, batch, labels, anchor: ModelParams, mu: float
) -> float:
    """Local FedProx objective, BCE + (mu / 2) * ||w - anchor||^2."""
    _check_congruent(model, anchor, "model", "anchor")
    drift = model.flat() - anchor.flat()
    return bce_loss(forward(model, batch), labels) + 0.5 * mu * float(
        drift @ drift
    )


def _shuffle_rng(seed: int, client_id: int, round_num: int):
    """Generator seeded by (seed, client, round), independent of call order."""
    return np.random.default_rng([seed, client_id, round_num])


def train_local(
    model: ModelParams,
    data: ClientPartition,
    anchor: ModelParams,
    config: TrainConfig,
    round_num: int = 0,
) -> ModelParams:
    """Run FedProx mini-batch SGD on one client's data.

    Each step takes an SGD step on the batch loss and then applies the
    proximal operator of (mu / 2) * ||w - anchor||^2, written as an SGD step
    on `proximal_grad` with coefficient mu / (1 + lr * mu). For small
    lr * mu this matches a step on the summed gradient; for large mu it
    pulls the parameters onto the anchor instead of overshooting it. With
    mu = 0 the trajectory is exactly plain SGD.

    Parameters
    ----------
    model : ModelParams
        Starting parameters, usually the broadcast global model.
    data : ClientPartition
        The client's private rows.
    anchor : ModelParams
        Proximal anchor, the broadcast global model. Not modified.
    config : TrainConfig
        Local optimisation settings.
    round_num : int, optional
        Federation round, mixed into the shuffle seed. By default 0.

    Returns
    -------
    ModelParams
        The locally updated parameters.

    Raises
    ------
    ValueError
        The partition is empty, or `model` and `anchor` differ in shape.

    """
    _type_defence(model, "model", ModelParams)
    _type_defence(data, "data", ClientPartition)
    _type_defence(config, "config", TrainConfig)
    _type_defence(round_num, "round_num", int)
    _check_congruent(model, anchor, "model", "anchor")
    if data.n_k == 0:
        raise ValueError(f"Client {data.client_id} has an empty partition.")

    x = data.data.features.astype(np.float64)
    y = data.data.labels
    lr = config.learning_rate
    mu = config.proximal_mu
    prox_coef = mu / (1.0 + lr * mu)
    rng = _shuffle_rng(config.seed, data.client_id, round_num)

    params = model
    for _ in range(config.local_epochs):
        order = rng.permutation(data.n_k)
        for start in range(0, data.n_k, config.batch_size):
            rows = order[start : start + config.batch_size]
            params = sgd_step(params, backward(params, x[rows], y[rows]), lr)
            if mu > 0:
                params = sgd_step(
                    params, proximal_grad(params, anchor, prox_coef), lr
                )
    return params
