"""Tests for federated/server.py."""
import os
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from school_performance.federated import server
from school_performance.federated.server import (
    FederationConfig,
    RoundRecord,
    aggregate,
    best_round,
    evaluate_global,
    history_to_frame,
    predict_global,
    run_federation,
    run_round,
    select_clients,
)
from school_performance.metrics import RoundMetrics
from school_performance.nn.checkpoint import read_checkpoint
from school_performance.nn.model import ModelParams, forward, init_model
from school_performance.nn.training import train_local

# import federated fixtures via pytest_plugins
pytest_plugins = ["tests.federated.federated_fixtures"]


def _record(round_num: int, acc: float) -> RoundRecord:
    """A history record with a placeholder model."""
    return RoundRecord(
        round=round_num,
        global_model=init_model([2, 1]),
        metrics=RoundMetrics(acc, 0.5, 0.5, 0.5, 0.7),
        participating_clients=[3, 1 + round_num],
    )


class TestFederationConfig:
    """Tests for `FederationConfig`."""

    def test_defaults(self):
        """Defaults follow the experimental setup."""
        cfg = FederationConfig()
        assert cfg.num_rounds == 20
        assert cfg.fraction_fit == 0.2
        assert cfg.min_fit_clients == 10
        assert cfg.hidden_dims == (64, 32)
        assert cfg.local_config.proximal_mu == 0.1

    def test_local_config_carries_strategy_mu(self):
        """FedAvg trains without the proximal term."""
        cfg = FederationConfig(proximal_mu=2.0)
        assert cfg.local_config.proximal_mu == 2.0
        assert replace(cfg, strategy="fedavg").local_config.proximal_mu == 0

    @pytest.mark.parametrize(
        "kwargs, exc, match",
        [
            ({"num_rounds": -1}, ValueError, "`num_rounds` must be >= 0"),
            ({"fraction_fit": 0.0}, ValueError, "`fraction_fit` must be"),
            ({"fraction_fit": 1.5}, ValueError, "`fraction_fit` must be"),
            ({"min_fit_clients": 0}, ValueError, "`min_fit_clients` must"),
            ({"n_jobs": 0}, ValueError, "`n_jobs` must be >= 1"),
            ({"proximal_mu": -1.0}, ValueError, "`proximal_mu` must be"),
            ({"strategy": "fedsgd"}, ValueError, "'strategy' expected"),
            ({"train_config": {}}, TypeError, "`train_config` expected"),
        ],
    )
    def test_defence(self, kwargs, exc, match):
        """Invalid settings are rejected."""
        with pytest.raises(exc, match=match):
            FederationConfig(**kwargs)


class TestSelectClients:
    """Tests for `select_clients()`."""

    def test_count_and_order(self, clients, fast_config):
        """round(0.3 * 10) clients, sorted by id, without repeats."""
        chosen = select_clients(clients, fast_config, 1)
        ids = [c.client_id for c in chosen]
        assert len(ids) == 3
        assert ids == sorted(set(ids))

    def test_min_fit_floor(self, clients, fast_config):
        """The floor wins over a smaller fraction."""
        cfg = replace(fast_config, fraction_fit=0.1, min_fit_clients=4)
        assert len(select_clients(clients, cfg, 1)) == 4

    def test_full_participation(self, clients, fast_config):
        """A fraction of 1 selects everyone."""
        cfg = replace(fast_config, fraction_fit=1.0)
        assert len(select_clients(clients, cfg, 7)) == 10

    def test_seeded_by_round(self, clients, fast_config):
        """Selection depends only on (seed, round)."""
        first = [
            [c.client_id for c in select_clients(clients, fast_config, t)]
            for t in range(1, 6)
        ]
        again = [
            [c.client_id for c in select_clients(clients, fast_config, t)]
            for t in range(1, 6)
        ]
        assert first == again
        assert len({tuple(ids) for ids in first}) > 1

    def test_defence(self, clients, fast_config):
        """Empty pools and over-large requests raise."""
        with pytest.raises(ValueError, match="must not be empty"):
            select_clients([], fast_config, 1)
        cfg = replace(fast_config, min_fit_clients=11)
        with pytest.raises(
            ValueError, match="11 clients requested per round but only 10"
        ):
            select_clients(clients, cfg, 1)


class TestAggregate:
    """Tests for `aggregate()`."""

    def test_hand_case(self):
        """Weights 1 and 3 give a 1:3 blend."""
        w1 = ModelParams([[[1.0, 2.0]]], [[0.0]])
        w2 = ModelParams([[[4.0, 5.0]]], [[1.0]])
        out = aggregate([(w1, 1), (w2, 3)])
        assert out.weights[0].tolist() == [[3.25, 4.25]]
        assert out.biases[0].tolist() == [0.75]

    def test_single_update_is_identity(self):
        """One client's update passes through unchanged."""
        model = init_model([6, 4, 1], seed=3)
        assert aggregate([(model, 37)]) == model

    @given(
        sizes=st.lists(st.integers(1, 500), min_size=1, max_size=6),
        seed=st.integers(0, 1000),
    )
    @settings(max_examples=100, deadline=None)
    def test_matches_weighted_mean(self, sizes, seed):
        """Aggregation is the sample-weighted mean of the parameters."""
        models = [init_model([3, 2, 1], seed + i) for i in range(len(sizes))]
        out = aggregate(list(zip(models, sizes)))
        expected = np.average(
            np.stack([m.flat() for m in models]), axis=0, weights=sizes
        )
        np.testing.assert_allclose(out.flat(), expected, atol=1e-12)
        stacked = np.stack([m.flat() for m in models])
        assert (out.flat() >= stacked.min(axis=0) - 1e-12).all()
        assert (out.flat() <= stacked.max(axis=0) + 1e-12).all()

    def test_defence(self):
        """Empty, zero-weight and mismatched updates are rejected."""
        model = init_model([3, 1])
        with pytest.raises(ValueError, match="`updates` must not be empty"):
            aggregate([])
        with pytest.raises(ValueError, match="`n_k` must be > 0"):
            aggregate([(model, 2), (model, 0)])
        with pytest.raises(ValueError, match="has layer dims"):
            aggregate([(model, 2), (init_model([3, 2, 1]), 2)])
        with pytest.raises(TypeError, match="`n_k` expected"):
            aggregate([(model, 2.0)])


class TestRunRound:
    """Tests for `run_round()`."""

    def test_run_round(self, clients, fast_config):
        """A round returns a new model and the sorted participant ids."""
        start = init_model([6, 4, 1], seed=5)
        model, ids = run_round(start, clients, fast_config, 1)
        expected = select_clients(clients, fast_config, 1)
        assert ids == [c.client_id for c in expected]
        assert model != start
        assert start == init_model([6, 4, 1], seed=5)

    def test_threads_match_sequential(self, clients, fast_config):
        """Concurrent client training gives bit-identical results."""
        start = init_model([6, 4, 1], seed=5)
        seq, _ = run_round(start, clients, fast_config, 2)
        par, _ = run_round(start, clients, replace(fast_config, n_jobs=3), 2)
        assert seq == par

    def test_server_sees_only_params_and_counts(
        self, mocker, clients, fast_config
    ):
        """Aggregation receives (parameters, row count) pairs and no rows."""
        spy = mocker.spy(server, "aggregate")
        start = init_model([6, 4, 1], seed=5)
        _, ids = run_round(start, clients, fast_config, 1)
        (updates,) = spy.call_args.args
        by_id = {c.client_id: c.n_k for c in clients}
        assert [n_k for _, n_k in updates] == [by_id[i] for i in ids]
        for update in updates:
            assert len(update) == 2
            params, n_k = update
            assert type(params) is ModelParams
            assert type(n_k) is int


class TestRunFederation:
    """Tests for `run_federation()`."""

    def test_history(self, clients, test_set, fast_config):
        """One record per round with metrics in range."""
        history = run_federation(clients, test_set, fast_config)
        assert [r.round for r in history] == [1, 2, 3]
        for rec in history:
            assert 0.0 <= rec.metrics.accuracy <= 1.0
            assert rec.metrics.loss > 0
            assert len(rec.participating_clients) == 3
            assert rec.global_model.layer_dims == [6, 4, 1]

    def test_reproducible(self, clients, test_set, fast_config):
        """Identical configs give identical trajectories."""
        a = run_federation(clients, test_set, fast_config)
        b = run_federation(clients, test_set, fast_config)
        assert all(x.global_model == y.global_model for x, y in zip(a, b))

    def test_zero_rounds(self, clients, test_set, fast_config):
        """No rounds, no history."""
        cfg = replace(fast_config, num_rounds=0)
        assert run_federation(clients, test_set, cfg) == []

    def test_single_client_matches_local_training(
        self, clients, test_set, fast_config
    ):
        """With one client and mu = 0 a round is plain local training."""
        cfg = replace(
            fast_config,
            num_rounds=1,
            fraction_fit=1.0,
            min_fit_clients=1,
            proximal_mu=0.0,
        )
        client = clients[4]
        history = run_federation([client], test_set, cfg)
        start = init_model([6, 4, 1], seed=cfg.seed)
        expected = train_local(
            start, client, start, cfg.local_config, round_num=1
        )
        assert history[0].global_model == expected

    def test_fedavg_is_fedprox_without_mu(
        self, clients, test_set, fast_config
    ):
        """FedAvg and FedProx with mu = 0 follow the same trajectory."""
        avg = run_federation(
            clients, test_set, replace(fast_config, strategy="fedavg")
        )
        prox = run_federation(
            clients, test_set, replace(fast_config, proximal_mu=0.0)
        )
        assert all(a.global_model == p.global_model for a, p in zip(avg, prox))

    def test_dominant_proximal_term(self, clients, test_set, fast_config):
        """A huge mu keeps the global model on its initialisation."""
        cfg = replace(
            fast_config,
            num_rounds=1,
            proximal_mu=1e6,
            train_config=replace(fast_config.train_config, learning_rate=0.01),
        )
        history = run_federation(clients, test_set, cfg)
        start = init_model([6, 4, 1], seed=cfg.seed)
        assert history[0].global_model.max_abs_diff(start) < 1e-3

    def test_learns(self, clients, test_set, fast_config):
        """More rounds on a learnable task beat chance on the test set."""
        cfg = replace(
            fast_config,
            num_rounds=20,
            fraction_fit=0.5,
            hidden_dims=(8,),
            train_config=replace(
                fast_config.train_config, learning_rate=0.5, local_epochs=10
            ),
        )
        history = run_federation(clients, test_set, cfg)
        assert best_round(history)[1] > 0.7

    def test_checkpoints(self, clients, test_set, fast_config, tmp_path):
        """Every round's global model is written and reloadable."""
        history = run_federation(
            clients, test_set, fast_config, checkpoint_dir=tmp_path / "ck"
        )
        assert sorted(os.listdir(tmp_path / "ck")) == [
            "round_001.txt",
            "round_002.txt",
            "round_003.txt",
        ]
        assert (
            read_checkpoint(tmp_path / "ck" / "round_002.txt")
            == history[1].global_model
        )

    def test_width_mismatch(self, clients, test_set, fast_config):
        """Clients must share the test set's encoding."""
        narrow = test_set.subset(np.arange(10))
        narrow = type(narrow)(
            features=narrow.features[:, :5],
            labels=narrow.labels,
            school_ids=narrow.school_ids,
            feature_names=narrow.feature_names[:5],
        )
        with pytest.raises(ValueError, match="Client 101 has 6 features"):
            run_federation(clients, narrow, fast_config)


class TestEvaluation:
    """Tests for `predict_global()` and `evaluate_global()`."""

    def test_chunked_prediction(self, test_set, mocker):
        """Chunked scoring equals a single forward pass."""
        model = init_model([6, 4, 1], seed=8)
        mocker.patch("school_performance.federated.server._EVAL_CHUNK", 7)
        np.testing.assert_array_equal(
            predict_global(model, test_set), forward(model, test_set.features)
        )

    def test_evaluate_global(self, test_set):
        """Metrics come from thresholding the probabilities at 0.5."""
        model = init_model([6, 4, 1], seed=8)
        probs = forward(model, test_set.features)
        metrics = evaluate_global(model, test_set)
        assert metrics.accuracy == pytest.approx(
            np.mean((probs > 0.5) == test_set.labels)
        )

    def test_empty_test_set(self, test_set):
        """An empty test set cannot be scored."""
        with pytest.raises(ValueError, match="`test_set` must not be empty"):
            predict_global(init_model([6, 1]), test_set.subset([]))


class TestHistoryHelpers:
    """Tests for `best_round()` and `history_to_frame()`."""

    def test_best_round_earliest_tie(self):
        """The first of equally accurate rounds wins."""
        history = [_record(1, 0.6), _record(2, 0.8), _record(3, 0.8)]
        assert best_round(history) == (2, 0.8)

    def test_best_round_empty(self):
        """An empty history has no best round."""
        with pytest.raises(ValueError, match="`history` must not be empty"):
            best_round([])

    def test_history_to_frame(self):
        """One row per round with joined participant ids."""
        frame = history_to_frame([_record(1, 0.6), _record(2, 0.8)])
        assert list(frame.columns) == [
            "round",
            "accuracy",
            "precision",
            "recall",
            "f1",
            "loss",
            "participating_client_ids",
        ]
        assert frame["participating_client_ids"].tolist() == ["3;2", "3;3"]
        assert frame["accuracy"].tolist() == [0.6, 0.8]
