"""
Local training at one client.

Full-batch epochs: gradient on the training set, one optimizer step, then
loss and accuracies at the new parameters.  Training stops once validation
accuracy has failed to beat its running best (starting from the initial
parameters) for ``patience`` consecutive epochs, or at ``max_epochs``.  The
returned model is the epoch-end checkpoint with the highest validation
accuracy, earliest epoch on ties.
"""
from __future__ import annotations

import logging
from typing import Optional

import numpy as np

from src.optim.optimizers import OptimizerKind, OptimizerState, lookahead_point, step
from src.qnn.circuit import accuracy, encode_dataset, evaluate, gradient, loss
from src.qnn.models import CircuitSpec, ModelParams

from .models import ClientConfig, ClientRoundResult, EpochRecord, TrainingConfig

logger = logging.getLogger(__name__)


def local_train(
    client: ClientConfig,
    circuit: CircuitSpec,
    init: ModelParams,
    training: TrainingConfig,
    rng: Optional[np.random.Generator] = None,
) -> tuple[ModelParams, list[EpochRecord]]:
    """
    Train from *init* on the client's data.

    *rng* drives the per-epoch shuffle; pass the client's long-lived stream
    to continue it across rounds, or leave it out to start from the seed.
    """
    init.check(circuit)
    if rng is None:
        rng = np.random.default_rng(client.rng_seed)

    train = encode_dataset(circuit, client.train_set.to_examples())
    validation = encode_dataset(circuit, client.validation_set.to_examples())
    opt = training.optimizer

    vector = init.to_vector()
    state = OptimizerState.initial(vector.shape[0])
    running_best = accuracy(circuit, init, validation)
    best_params: Optional[ModelParams] = None
    best_accuracy = -1.0
    stale = 0
    history: list[EpochRecord] = []

    for epoch in range(1, training.max_epochs + 1):
        batch = train.take(rng.permutation(len(train))) if training.shuffle_each_epoch else train
        at = lookahead_point(opt, state, vector) if opt.kind == OptimizerKind.NESTEROV else vector
        angle_grads, bias_grad = gradient(circuit, ModelParams.from_vector(at), batch)
        vector, state = step(opt, state, vector, np.append(angle_grads, bias_grad))

        params = ModelParams.from_vector(vector)
        record = EpochRecord(
            epoch=epoch,
            loss=loss(circuit, params, train),
            train_accuracy=accuracy(circuit, params, train),
            validation_accuracy=accuracy(circuit, params, validation),
            params=params,
        )
        history.append(record)
        logger.debug(
            "[client %s] epoch %d loss=%.6f train_acc=%.4f val_acc=%.4f",
            client.client_id, epoch, record.loss, record.train_accuracy,
            record.validation_accuracy,
        )

        if record.validation_accuracy > best_accuracy:
            best_accuracy = record.validation_accuracy
            best_params = params
        if record.validation_accuracy > running_best:
            running_best = record.validation_accuracy
            stale = 0
        else:
            stale += 1
            if stale >= training.patience:
                break

    logger.info(
        "[client %s] %d epoch(s), best validation accuracy %.4f",
        client.client_id, len(history), best_accuracy,
    )
    return best_params, history


def train_client(
    client: ClientConfig,
    circuit: CircuitSpec,
    init: ModelParams,
    training: TrainingConfig,
    rng: Optional[np.random.Generator] = None,
) -> ClientRoundResult:
    """``local_train`` plus the best checkpoint's confusion on validation."""
    best, history = local_train(client, circuit, init, training, rng)
    return ClientRoundResult(
        client_id=client.client_id,
        best_params=best,
        best_validation_accuracy=max(h.validation_accuracy for h in history),
        epochs_run=len(history),
        history=history,
        local_confusion=evaluate(circuit, best, client.validation_set.to_examples()),
    )
