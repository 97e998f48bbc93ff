"""
Feature 4 — In-Process Federation Tests
=======================================

Weighted aggregation, local training with patience and best-checkpoint
selection, and federated rounds run in one process.

Test matrix:
  4.1  Aggregation oracle — fixed point, 27/14, weight scaling, envelope,
       exact single update and equal-weight mean
  4.2  Aggregation errors — empty, length mismatch, bad weights
  4.3  Local training — patience stop, one-epoch budget, best checkpoint
  4.4  Local determinism — identical histories for identical seeds
  4.5  Rounds — single client equals its local model, identical clients
  4.6  Stopping — rounds_max bound, target accuracy early stop
  4.7  Parallel clients — same records as sequential
  4.8  Plan validation — unique ids, patience within budget
"""
from __future__ import annotations

import numpy as np
import pytest

from src.fed.federation import aggregate, run_federation
from src.fed.models import (
    ClientConfig,
    EmptyUpdateSet,
    FederationPlan,
    LengthMismatch,
    NonPositiveWeight,
    RosterEntry,
    TrainingConfig,
)
from src.data.models import Patch, PatchDataset, PatchLabel
from src.fed.training import local_train, train_client
from src.optim.optimizers import OptimizerConfig, OptimizerKind
from src.qnn.circuit import accuracy
from src.qnn.models import CircuitSpec, ModelParams
from tests.conftest import make_clients


pytestmark = pytest.mark.feature_4


@pytest.fixture
def spec() -> CircuitSpec:
    return CircuitSpec()


@pytest.fixture
def clients(small_pool) -> list[ClientConfig]:
    return make_clients(small_pool, [5.0, 5.0, 4.0])


# -----------------------------------------------------------------------
# 4.1 Aggregation oracle
# -----------------------------------------------------------------------
class TestAggregationOracle:
    def test_identical_vectors_fixed_point(self, rng):
        v = rng.normal(size=15)
        out = aggregate([(v, 5.0), (v, 5.0), (v, 4.0)])
        assert np.max(np.abs(out - v)) < 1e-12

    def test_five_five_four(self):
        out = aggregate([([1.0], 5.0), ([2.0], 5.0), ([3.0], 4.0)])
        assert abs(out[0] - 27.0 / 14.0) < 1e-12

    def test_weight_scale_homogeneity(self):
        a = aggregate([([1.0], 5.0), ([2.0], 5.0), ([3.0], 4.0)])
        b = aggregate([([1.0], 50.0), ([2.0], 50.0), ([3.0], 40.0)])
        assert abs(a[0] - b[0]) < 1e-12

    def test_permutation_safe(self, rng):
        updates = [(rng.normal(size=15), float(w)) for w in rng.uniform(0.5, 5, 4)]
        a = aggregate(updates)
        b = aggregate(updates[::-1])
        assert np.max(np.abs(a - b)) < 1e-12

    def test_within_envelope(self, rng):
        vectors = [rng.normal(size=15) for _ in range(3)]
        out = aggregate(list(zip(vectors, [1.0, 2.0, 3.0])))
        stacked = np.stack(vectors)
        assert np.all(out >= stacked.min(axis=0) - 1e-12)
        assert np.all(out <= stacked.max(axis=0) + 1e-12)

    @pytest.mark.parametrize("weight", [1.0, 4.0, 5.0, 0.3])
    def test_single_update_is_exact(self, rng, weight):
        v = rng.normal(size=15)
        out = aggregate([(v, weight)])
        assert out.tolist() == v.tolist()
        out[0] += 1.0
        assert out[0] != v[0]

    def test_equal_weights_are_plain_mean(self, rng):
        a, b = rng.normal(size=15), rng.normal(size=15)
        assert aggregate([(a, 5.0), (b, 5.0)]).tolist() == ((a + b) / 2).tolist()


# -----------------------------------------------------------------------
# 4.2 Aggregation errors
# -----------------------------------------------------------------------
class TestAggregationErrors:
    def test_empty(self):
        with pytest.raises(EmptyUpdateSet):
            aggregate([])

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            aggregate([([1.0, 2.0], 1.0), ([1.0], 1.0)])

    @pytest.mark.parametrize("weight", [0.0, -1.0, float("nan")])
    def test_non_positive_weight(self, weight):
        with pytest.raises(NonPositiveWeight):
            aggregate([([1.0], 1.0), ([2.0], weight)])


# -----------------------------------------------------------------------
# 4.3 Local training
# -----------------------------------------------------------------------
class TestLocalTraining:
    def test_one_epoch_budget(self, spec, clients):
        training = TrainingConfig(max_epochs=1, patience=1)
        best, history = local_train(clients[0], spec, ModelParams.zeros(spec), training)
        assert len(history) == 1
        assert best is not None
        assert best != ModelParams.zeros(spec)

    def test_perfect_init_stops_after_patience(self, spec):
        # zero params send basis index 0 to <Z> = +1 and index 1 to <Z> = -1
        positive = Patch(features=[1.0] + [0.0] * 125, label=PatchLabel.AFFECTED)
        negative = Patch(features=[0.0, 1.0] + [0.0] * 124, label=PatchLabel.HEALTHY)
        data = PatchDataset(dataset_id="perfect", patches=[positive, negative] * 2)
        client = ClientConfig(client_id="p", train_set=data, validation_set=data)
        training = TrainingConfig(max_epochs=20, patience=3)
        best, history = local_train(client, spec, ModelParams.zeros(spec), training)
        assert len(history) == 3
        assert accuracy(spec, best, data.to_examples()) == 1.0

    def test_best_is_max_validation_checkpoint(self, spec, clients, quick_training):
        client = clients[0]
        best, history = local_train(client, spec, ModelParams.zeros(spec), quick_training)
        best_acc = max(h.validation_accuracy for h in history)
        assert accuracy(spec, best, client.validation_set.to_examples()) == best_acc
        for h in history:
            assert accuracy(spec, best, client.validation_set.to_examples()) >= h.validation_accuracy

    def test_history_epochs_start_at_one(self, spec, clients, quick_training):
        _, history = local_train(clients[0], spec, ModelParams.zeros(spec), quick_training)
        assert [h.epoch for h in history] == list(range(1, len(history) + 1))
        assert all(np.isfinite(h.loss) for h in history)

    def test_train_client_confusion_is_best_checkpoint(self, spec, clients, quick_training):
        result = train_client(clients[1], spec, ModelParams.zeros(spec), quick_training)
        assert result.local_confusion.total == len(clients[1].validation_set)
        assert result.local_confusion.accuracy == result.best_validation_accuracy
        assert result.epochs_run == len(result.history)

    @pytest.mark.parametrize("kind", list(OptimizerKind), ids=lambda k: k.value)
    def test_every_optimizer_runs(self, spec, clients, kind):
        training = TrainingConfig(optimizer=OptimizerConfig(kind=kind), max_epochs=2, patience=2)
        best, history = local_train(clients[2], spec, ModelParams.zeros(spec), training)
        assert len(history) >= 1
        best.check(spec)


# -----------------------------------------------------------------------
# 4.4 Local determinism
# -----------------------------------------------------------------------
class TestLocalDeterminism:
    def test_identical_histories(self, spec, clients, quick_training):
        a = local_train(clients[0], spec, ModelParams.zeros(spec), quick_training)
        b = local_train(clients[0], spec, ModelParams.zeros(spec), quick_training)
        assert a == b

    def test_explicit_rng_matches_seed(self, spec, clients, quick_training):
        rng = np.random.default_rng(clients[0].rng_seed)
        explicit = local_train(clients[0], spec, ModelParams.zeros(spec), quick_training, rng)
        seeded = local_train(clients[0], spec, ModelParams.zeros(spec), quick_training)
        assert explicit == seeded


# -----------------------------------------------------------------------
# 4.5 Rounds
# -----------------------------------------------------------------------
class TestRounds:
    def test_single_client_global_is_its_best(self, spec, clients, quick_training):
        plan = FederationPlan(clients=[clients[0]], rounds_max=2, training=quick_training, circuit=spec)
        for record in run_federation(plan):
            assert record.global_params.to_vector().tolist() == record.clients[0].best_params.to_vector().tolist()

    def test_identical_clients_agree(self, spec, clients, quick_training):
        base = clients[0]
        twins = [
            ClientConfig(
                client_id=f"twin{i}",
                aggregation_weight=1.0,
                train_set=base.train_set,
                validation_set=base.validation_set,
                rng_seed=base.rng_seed,
            )
            for i in range(3)
        ]
        plan = FederationPlan(clients=twins, rounds_max=1, training=quick_training, circuit=spec)
        record = run_federation(plan)[0]
        for client in record.clients:
            assert np.max(np.abs(record.global_params.to_vector() - client.best_params.to_vector())) < 1e-12

    def test_round_zero_starts_from_zeros(self, spec, clients):
        training = TrainingConfig(
            optimizer=OptimizerConfig(kind=OptimizerKind.GD, learning_rate=0.05), max_epochs=1, patience=1
        )
        plan = FederationPlan(clients=[clients[0]], rounds_max=1, training=training, circuit=spec)
        record = run_federation(plan)[0]
        train_only = train_client(clients[0], spec, ModelParams.zeros(spec), training)
        assert record.clients[0].best_params == train_only.best_params

    def test_records_sorted_by_client_id(self, spec, clients, quick_training):
        plan = FederationPlan(clients=clients[::-1], rounds_max=1, training=quick_training, circuit=spec)
        record = run_federation(plan)[0]
        assert [c.client_id for c in record.clients] == ["c1", "c2", "c3"]
        assert [e.client_id for e in record.global_evaluations] == ["c1", "c2", "c3"]

    def test_deterministic_records(self, spec, clients, quick_training):
        plan = FederationPlan(clients=clients, rounds_max=2, training=quick_training, circuit=spec)
        assert run_federation(plan) == run_federation(plan)


# -----------------------------------------------------------------------
# 4.6 Stopping
# -----------------------------------------------------------------------
class TestStopping:
    def test_at_most_rounds_max(self, spec, clients, quick_training):
        plan = FederationPlan(clients=clients, rounds_max=3, training=quick_training, circuit=spec)
        records = run_federation(plan)
        assert len(records) <= 3
        assert [r.round_index for r in records] == list(range(len(records)))

    def test_target_stops_early(self, spec, clients, quick_training):
        # a target every client meets after round 0 stops the run there
        round_zero = run_federation(
            FederationPlan(clients=clients, rounds_max=1, training=quick_training, circuit=spec)
        )[0]
        target = min(e.accuracy for e in round_zero.global_evaluations)
        plan = FederationPlan(
            clients=clients, rounds_max=5, target_accuracy=target, training=quick_training, circuit=spec
        )
        records = run_federation(plan)
        assert len(records) == 1
        assert records[0].reached(target)


# -----------------------------------------------------------------------
# 4.7 Parallel clients
# -----------------------------------------------------------------------
class TestParallelClients:
    def test_parallel_matches_sequential(self, spec, clients, quick_training):
        sequential = run_federation(
            FederationPlan(clients=clients, rounds_max=2, training=quick_training, circuit=spec)
        )
        parallel = run_federation(
            FederationPlan(clients=clients, rounds_max=2, training=quick_training, circuit=spec, parallel=True)
        )
        for a, b in zip(sequential, parallel):
            assert np.max(np.abs(a.global_params.to_vector() - b.global_params.to_vector())) <= 1e-12


# -----------------------------------------------------------------------
# 4.8 Plan validation
# -----------------------------------------------------------------------
class TestPlanValidation:
    def test_duplicate_ids(self):
        with pytest.raises(ValueError):
            FederationPlan(clients=[RosterEntry(client_id="a"), RosterEntry(client_id="a")])

    def test_patience_over_budget(self):
        with pytest.raises(ValueError):
            TrainingConfig(max_epochs=3, patience=4)

    def test_roster_without_data_cannot_run_in_process(self):
        plan = FederationPlan(clients=[RosterEntry(client_id="remote", aggregation_weight=2.0)])
        with pytest.raises(ValueError):
            run_federation(plan)

    def test_weight_lookup(self, clients):
        plan = FederationPlan(clients=clients)
        assert plan.weight_of("c3") == 4.0
        assert plan.client_ids() == ["c1", "c2", "c3"]
