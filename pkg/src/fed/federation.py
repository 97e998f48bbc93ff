"""
Federated rounds, run in one process.

Round r: every client trains locally from the current global parameters
(all zeros before the first round), the server takes the weighted average
of the clients' best checkpoints, and the new global model is scored on
each client's validation set.  The run ends after ``rounds_max`` rounds or
as soon as every client reaches ``target_accuracy`` on the global model.

Clients are always aggregated in client-id order, so results do not depend
on roster order or on whether clients trained in parallel.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Sequence

import numpy as np

from src.qnn.circuit import evaluate
from src.qnn.models import ModelParams

from .models import (
    ClientConfig,
    ClientEvaluation,
    ClientRoundResult,
    ClientTrainingError,
    EmptyUpdateSet,
    FederationError,
    FederationPlan,
    LengthMismatch,
    NonPositiveWeight,
    RoundRecord,
)
from .training import train_client

logger = logging.getLogger(__name__)


def aggregate(updates: Sequence[tuple[Sequence[float] | np.ndarray, float]]) -> np.ndarray:
    """
    Weighted average sum(W_i * a_i) / sum(a_i), accumulated in input order.

    A single update comes back unchanged and equal weights reduce to the
    plain mean, so neither case picks up rounding from the weights.
    """
    if not updates:
        raise EmptyUpdateSet("no client updates to aggregate")
    vectors = [np.asarray(p, dtype=np.float64) for p, _ in updates]
    size = vectors[0].shape
    for i, v in enumerate(vectors):
        if v.shape != size:
            raise LengthMismatch(f"update {i} has shape {v.shape}, expected {size}")
    weights = [float(w) for _, w in updates]
    for i, w in enumerate(weights):
        if not (math.isfinite(w) and w > 0):
            raise NonPositiveWeight(f"update {i} has weight {w!r}")

    if len(vectors) == 1:
        return vectors[0].copy()
    if all(w == weights[0] for w in weights):
        total = np.zeros(size, dtype=np.float64)
        for v in vectors:
            total += v
        return total / len(vectors)

    total = np.zeros(size, dtype=np.float64)
    weight_sum = 0.0
    for v, w in zip(vectors, weights):
        total += w * v
        weight_sum += w
    return total / weight_sum


def _local_clients(plan: FederationPlan) -> list[ClientConfig]:
    clients = sorted(plan.clients, key=lambda c: c.client_id)
    for c in clients:
        if not isinstance(c, ClientConfig):
            raise FederationError(f"client {c.client_id!r} has no local data in this process")
    return clients


def run_federation(plan: FederationPlan) -> list[RoundRecord]:
    clients = _local_clients(plan)
    rngs = {c.client_id: np.random.default_rng(c.rng_seed) for c in clients}
    global_params = ModelParams.zeros(plan.circuit)
    records: list[RoundRecord] = []

    def run_one(client: ClientConfig, init: ModelParams) -> ClientRoundResult:
        try:
            return train_client(client, plan.circuit, init, plan.training, rngs[client.client_id])
        except Exception as exc:
            raise ClientTrainingError(client.client_id, exc) from exc

    for round_index in range(plan.rounds_max):
        logger.info("[server] round %d: training %d client(s)", round_index, len(clients))
        if plan.parallel:
            with ThreadPoolExecutor(max_workers=len(clients)) as pool:
                futures = [pool.submit(run_one, c, global_params) for c in clients]
                results = [f.result() for f in futures]
        else:
            results = [run_one(c, global_params) for c in clients]

        aggregated = aggregate(
            [(r.best_params.to_vector(), c.aggregation_weight) for r, c in zip(results, clients)]
        )
        global_params = ModelParams.from_vector(aggregated)

        evaluations = [
            ClientEvaluation(
                client_id=c.client_id,
                confusion=evaluate(plan.circuit, global_params, c.validation_set.to_examples()),
            )
            for c in clients
        ]
        record = RoundRecord(
            round_index=round_index,
            clients=results,
            global_params=global_params,
            global_evaluations=evaluations,
        )
        records.append(record)
        logger.info(
            "[server] round %d aggregated; global validation accuracy %s",
            round_index,
            ", ".join(f"{e.client_id}={e.accuracy:.4f}" for e in evaluations),
        )
        if record.reached(plan.target_accuracy):
            logger.info("[server] target accuracy %.4f reached", plan.target_accuracy)
            break
    return records
