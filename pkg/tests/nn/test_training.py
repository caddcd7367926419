"""Tests for nn/training.py."""
from dataclasses import replace

import numpy as np
import pytest

from school_performance.nn.model import (
    backward,
    bce_loss,
    forward,
    init_model,
    sgd_step,
)
from school_performance.nn.training import (
    TrainConfig,
    _shuffle_rng,
    fedprox_objective,
    train_local,
)
from school_performance.preprocessing.dataset import ClientPartition

# import nn fixtures via pytest_plugins
pytest_plugins = ["tests.nn.nn_fixtures"]


@pytest.fixture(scope="module")
def start():
    """Starting parameters for a 6-wide client."""
    return init_model([6, 4, 1], seed=1)


class TestTrainConfig:
    """Tests for `TrainConfig`."""

    def test_defaults(self):
        """Defaults follow the experimental setup."""
        cfg = TrainConfig()
        assert (cfg.learning_rate, cfg.batch_size, cfg.local_epochs) == (
            0.01,
            32,
            10,
        )
        assert cfg.proximal_mu == 0.1

    @pytest.mark.parametrize(
        "kwargs, exc, match",
        [
            ({"learning_rate": 0.0}, ValueError, "`learning_rate`"),
            ({"batch_size": 0}, ValueError, "`batch_size` must be >= 1"),
            ({"local_epochs": -1}, ValueError, "`local_epochs` must be"),
            ({"proximal_mu": -0.1}, ValueError, "`proximal_mu` must be"),
            ({"batch_size": 2.0}, TypeError, "`batch_size` expected"),
        ],
    )
    def test_defence(self, kwargs, exc, match):
        """Invalid settings are rejected."""
        with pytest.raises(exc, match=match):
            TrainConfig(**kwargs)


class TestTrainLocal:
    """Tests for `train_local()`."""

    def test_zero_epochs_is_identity(self, start, client):
        """No local epochs leaves the model untouched."""
        cfg = TrainConfig(local_epochs=0)
        assert train_local(start, client, start, cfg) == start

    def test_deterministic(self, start, client):
        """Same seed, client and round give identical parameters."""
        cfg = TrainConfig(local_epochs=2)
        a = train_local(start, client, start, cfg, round_num=3)
        b = train_local(start, client, start, cfg, round_num=3)
        assert a == b
        assert train_local(start, client, start, cfg, round_num=4) != a

    def test_mu_zero_is_plain_sgd(self, start, client):
        """Without the proximal term the trajectory is mini-batch SGD."""
        cfg = TrainConfig(local_epochs=3, batch_size=8, proximal_mu=0.0)
        x = client.data.features.astype(np.float64)
        y = client.data.labels
        rng = _shuffle_rng(cfg.seed, client.client_id, 2)
        expected = start
        for _ in range(cfg.local_epochs):
            order = rng.permutation(client.n_k)
            for s in range(0, client.n_k, cfg.batch_size):
                rows = order[s : s + cfg.batch_size]
                expected = sgd_step(
                    expected,
                    backward(expected, x[rows], y[rows]),
                    cfg.learning_rate,
                )
        assert train_local(start, client, start, cfg, round_num=2) == expected

    def test_training_reduces_loss(self, start, client):
        """Local training lowers the client's loss."""
        cfg = TrainConfig(learning_rate=0.1, local_epochs=20, proximal_mu=0)
        x, y = client.data.features, client.data.labels
        trained = train_local(start, client, start, cfg)
        assert bce_loss(forward(trained, x), y) < bce_loss(
            forward(start, x), y
        )

    def test_large_mu_pins_to_anchor(self, start, client):
        """A dominant proximal term keeps the update on the anchor."""
        cfg = TrainConfig(local_epochs=5, proximal_mu=1e6)
        trained = train_local(start, client, start, cfg)
        assert trained.max_abs_diff(start) < 1e-3

    def test_mu_limits_drift(self, start, client):
        """A stronger proximal term keeps the model closer to the anchor."""
        cfg = TrainConfig(learning_rate=0.1, local_epochs=5, proximal_mu=0)
        free = train_local(start, client, start, cfg)
        held = train_local(start, client, start, replace(cfg, proximal_mu=5))
        drift_free = np.linalg.norm(free.flat() - start.flat())
        drift_held = np.linalg.norm(held.flat() - start.flat())
        assert drift_held < drift_free

    def test_anchor_not_modified(self, start, client):
        """The anchor is read, never written."""
        anchor = init_model([6, 4, 1], seed=1)
        train_local(start, client, anchor, TrainConfig(local_epochs=1))
        assert anchor == start

    def test_defence(self, start, client):
        """Empty partitions and mismatched anchors are rejected."""
        empty = ClientPartition(client_id=1, data=client.data.subset([]))
        with pytest.raises(ValueError, match="Client 1 has an empty"):
            train_local(start, empty, start, TrainConfig())
        with pytest.raises(ValueError, match="has layer dims"):
            train_local(start, client, init_model([6, 1]), TrainConfig())


class TestFedproxObjective:
    """Tests for `fedprox_objective()`."""

    def test_at_anchor_equals_loss(self, start, client):
        """At the anchor the proximal term vanishes."""
        x, y = client.data.features, client.data.labels
        assert fedprox_objective(start, x, y, start, 10.0) == pytest.approx(
            bce_loss(forward(start, x), y)
        )

    def test_proximal_term(self, start, client):
        """Away from the anchor the term adds (mu / 2) * ||w - anchor||^2."""
        x, y = client.data.features, client.data.labels
        other = init_model([6, 4, 1], seed=2)
        sq = float(np.sum((other.flat() - start.flat()) ** 2))
        assert fedprox_objective(
            other, x, y, start, 2.0
        ) - fedprox_objective(other, x, y, start, 0.0) == pytest.approx(sq)

    @pytest.mark.parametrize("mu", [0.1, 1.0])
    @pytest.mark.parametrize("seed", range(10))
    def test_one_small_step_decreases_objective(self, client, seed, mu):
        """A single full-batch local step moves downhill on the objective."""
        x, y = client.data.features, client.data.labels
        model = init_model([6, 4, 1], seed=seed)
        anchor = init_model([6, 4, 1], seed=seed + 100)
        cfg = TrainConfig(
            learning_rate=1e-4,
            batch_size=client.n_k,
            local_epochs=1,
            proximal_mu=mu,
        )
        stepped = train_local(model, client, anchor, cfg)
        assert fedprox_objective(
            stepped, x, y, anchor, mu
        ) < fedprox_objective(model, x, y, anchor, mu)
