"""
Feature 8 — End-to-End Regression Tests
=======================================

The synthetic benchmark: a 942-patch pool (healthy background vs. background
with a bright 2x2 dot) dealt to three clients of 314, split 235/79 each,
federated with weights 5:5:4 under seed 42.

Test matrix:
  8.1  Data layout — 3 x 314 shares, 235/79 splits, balanced classes
  8.2  Accuracy — uncorrected Adam reaches 0.85 on every client
  8.3  Optimizer ordering — Adam's final accuracy is at least GD's; the
       aggregated model holds every client's local accuracy within 0.05
  8.4  Transport — the same plan over loopback TCP gives the same model
"""
from __future__ import annotations

import asyncio

import numpy as np
import pytest

from src.cli.config import resolve_config
from src.cli.runner import local_clients
from src.fed.federation import run_federation
from src.fednet.client import EXIT_OK, client_session
from src.fednet.server import FederationServer
from src.optim.optimizers import OptimizerKind


pytestmark = pytest.mark.feature_8

# roughly four of a client's 79 validation patches
FL_TOLERANCE = 0.05


@pytest.fixture(scope="module")
def config():
    return resolve_config({"mode": "federate", "synthetic": True, "weights": "5:5:4", "seed": 42})


@pytest.fixture(scope="module")
def clients(config, tmp_path_factory):
    return local_clients(config, tmp_path_factory.mktemp("benchmark"))


@pytest.fixture(scope="module")
def adam_records(config, clients):
    return run_federation(config.plan(clients, OptimizerKind.ADAM))


def final_accuracy(records) -> dict[str, float]:
    return {e.client_id: e.accuracy for e in records[-1].global_evaluations}


# -----------------------------------------------------------------------
# 8.1 Data layout
# -----------------------------------------------------------------------
class TestBenchmarkData:
    def test_client_sizes(self, clients):
        assert [c.client_id for c in clients] == ["c1", "c2", "c3"]
        for c in clients:
            assert len(c.train_set) + len(c.validation_set) == 314
            assert (len(c.train_set), len(c.validation_set)) == (235, 79)

    def test_weights_and_seeds(self, clients):
        assert [c.aggregation_weight for c in clients] == [5.0, 5.0, 4.0]
        assert [c.rng_seed for c in clients] == [43, 44, 45]

    def test_plan_defaults(self, config, clients):
        plan = config.plan(clients)
        assert plan.rounds_max == 5
        assert plan.training.max_epochs == 100
        assert plan.training.optimizer.kind == OptimizerKind.ADAM
        assert plan.training.optimizer.bias_correction is False
        assert plan.circuit.parameter_count() == 15


# -----------------------------------------------------------------------
# 8.2 Accuracy
# -----------------------------------------------------------------------
@pytest.mark.slow
class TestBenchmarkAccuracy:
    def test_every_client_reaches_085(self, adam_records):
        assert 1 <= len(adam_records) <= 5
        for client_id, acc in final_accuracy(adam_records).items():
            assert acc >= 0.85, client_id

    def test_epoch_budget(self, adam_records):
        for record in adam_records:
            for client in record.clients:
                assert 1 <= client.epochs_run <= 100


# -----------------------------------------------------------------------
# 8.3 Optimizer ordering
# -----------------------------------------------------------------------
@pytest.mark.slow
class TestOptimizerOrdering:
    def test_adam_not_worse_than_gd(self, config, clients, adam_records):
        gd_records = run_federation(config.plan(clients, OptimizerKind.GD))
        adam = final_accuracy(adam_records)
        gd = final_accuracy(gd_records)
        assert np.mean(list(adam.values())) >= np.mean(list(gd.values()))

    def test_federated_model_holds_each_client(self, adam_records):
        final = adam_records[-1]
        before = {c.client_id: c.best_validation_accuracy for c in final.clients}
        after = final_accuracy(adam_records)
        assert before.keys() == after.keys()
        for client_id, local in before.items():
            assert after[client_id] >= local - FL_TOLERANCE, client_id


# -----------------------------------------------------------------------
# 8.4 Transport
# -----------------------------------------------------------------------
@pytest.mark.slow
class TestTransportIndependence:
    @pytest.mark.asyncio
    async def test_loopback_matches_in_process(self, config, clients, adam_records):
        server = FederationServer(config.plan(clients))
        port = await server.start()
        server_task = asyncio.create_task(server.run())
        statuses = await asyncio.gather(
            *(
                client_session(
                    "127.0.0.1", port, c.client_id, c.train_set, c.validation_set, c.rng_seed
                )
                for c in clients
            )
        )
        records = await server_task

        assert statuses == [EXIT_OK] * len(clients)
        assert len(records) == len(adam_records)
        got = records[-1].global_params.to_vector()
        want = adam_records[-1].global_params.to_vector()
        assert np.max(np.abs(got - want)) <= 1e-12
