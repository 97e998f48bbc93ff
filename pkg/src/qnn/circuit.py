"""
Forward pass, loss and gradients of the variational classifier.

    score(x) = <Z_{n-1}> of U(theta) |psi(x)> + bias

|psi(x)> is the amplitude encoding of the features, U(theta) the
alternating RY / CNOT ansatz from ``build_circuit``.  Loss is the mean
squared error against labels in {-1, +1}; angle gradients come from the
parameter-shift rule (shift pi/2, exact for RY generators).

Datasets are encoded once into an ``EncodedBatch`` and pushed through the
circuit as a single ``(N, 2**n)`` array; every reduction over examples is a
numpy sum in row order, so repeated calls are bitwise reproducible.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from src.metrics.classification import ConfusionMatrix, tally
from src.qstate.gates import CNOT, GateKind, ry
from src.qstate.statevector import (
    StateVector,
    amplitude_encode_batch,
    apply_gate_batch,
    expectation_z_batch,
)

from .models import CircuitSpec, EmptyDataset, ForwardTrace, LabeledExample, ModelParams

SHIFT = math.pi / 2


@dataclass(frozen=True)
class Operation:
    kind: GateKind
    targets: tuple[int, ...]


@dataclass(frozen=True)
class EncodedBatch:
    """Amplitude-encoded inputs with their +/-1 labels, one row per example."""

    states: np.ndarray
    labels: np.ndarray

    def __len__(self) -> int:
        return self.labels.shape[0]

    def take(self, order: np.ndarray) -> "EncodedBatch":
        return EncodedBatch(self.states[order], self.labels[order])


Dataset = Union[Sequence[LabeledExample], EncodedBatch]


# ---------------------------------------------------------------------------
# Circuit construction
# ---------------------------------------------------------------------------

def _operations(spec: CircuitSpec, angles: Sequence[float]) -> list[Operation]:
    ops: list[Operation] = []
    pairs = spec.entangling_pairs()
    n = spec.n_qubits
    for layer in range(spec.layers):
        for q in range(n):
            ops.append(Operation(ry(float(angles[layer * n + q])), (q,)))
        for control, target in pairs:
            ops.append(Operation(CNOT, (control, target)))
    return ops


def build_circuit(spec: CircuitSpec, params: ModelParams) -> list[Operation]:
    """Ordered gate list: per layer, RY on every qubit then the block's CNOTs."""
    params.check(spec)
    return _operations(spec, params.angles)


def _run(spec: CircuitSpec, angles: Sequence[float], states: np.ndarray) -> np.ndarray:
    for op in _operations(spec, angles):
        states = apply_gate_batch(states, op.kind, op.targets, spec.n_qubits)
    return states


def _expectations(spec: CircuitSpec, angles: Sequence[float], states: np.ndarray) -> np.ndarray:
    """Bias-free readout <Z_{n-1}> for every row."""
    final = _run(spec, angles, states)
    return expectation_z_batch(final, spec.readout_qubit, spec.n_qubits)


# ---------------------------------------------------------------------------
# Encoding
# ---------------------------------------------------------------------------

def encode_dataset(spec: CircuitSpec, dataset: Sequence[LabeledExample]) -> EncodedBatch:
    if len(dataset) == 0:
        raise EmptyDataset("dataset is empty")
    features = np.array([ex.features for ex in dataset], dtype=np.float64)
    labels = np.array([ex.label for ex in dataset], dtype=np.float64)
    return EncodedBatch(amplitude_encode_batch(features, spec.n_qubits), labels)


def _as_batch(spec: CircuitSpec, dataset: Dataset) -> EncodedBatch:
    if isinstance(dataset, EncodedBatch):
        if len(dataset) == 0:
            raise EmptyDataset("dataset is empty")
        return dataset
    return encode_dataset(spec, dataset)


def predicted_label(score: float) -> int:
    return 1 if score >= 0.0 else -1


# ---------------------------------------------------------------------------
# Public operations
# ---------------------------------------------------------------------------

def forward(
    spec: CircuitSpec,
    params: ModelParams,
    features: Sequence[float] | np.ndarray,
    keep_state: bool = False,
) -> ForwardTrace:
    """Score one feature vector."""
    params.check(spec)
    x = np.asarray(features, dtype=np.float64).reshape(1, -1)
    final = _run(spec, params.angles, amplitude_encode_batch(x, spec.n_qubits))
    score = float(expectation_z_batch(final, spec.readout_qubit, spec.n_qubits)[0]) + params.bias
    state = StateVector(spec.n_qubits, final[0]) if keep_state else None
    return ForwardTrace(score=score, predicted_label=predicted_label(score), final_state=state)


def scores(spec: CircuitSpec, params: ModelParams, dataset: Dataset) -> np.ndarray:
    params.check(spec)
    batch = _as_batch(spec, dataset)
    return _expectations(spec, params.angles, batch.states) + params.bias


def loss(spec: CircuitSpec, params: ModelParams, dataset: Dataset) -> float:
    """Mean squared error of the scores against the +/-1 labels."""
    batch = _as_batch(spec, dataset)
    residual = scores(spec, params, batch) - batch.labels
    return float(np.sum(residual * residual) / len(batch))


def gradient(
    spec: CircuitSpec, params: ModelParams, dataset: Dataset
) -> tuple[np.ndarray, float]:
    """
    Gradient of ``loss`` with respect to (angles, bias).

    Each angle derivative uses two extra circuit runs at theta_k +/- pi/2.
    """
    params.check(spec)
    batch = _as_batch(spec, dataset)
    n = len(batch)
    angles = np.array(params.angles, dtype=np.float64)

    base = _expectations(spec, angles, batch.states)
    weights = 2.0 * (base + params.bias - batch.labels)

    grads = np.empty(angles.shape[0], dtype=np.float64)
    for k in range(angles.shape[0]):
        plus, minus = angles.copy(), angles.copy()
        plus[k] += SHIFT
        minus[k] -= SHIFT
        diff = _expectations(spec, plus, batch.states) - _expectations(spec, minus, batch.states)
        grads[k] = np.sum(weights * diff / 2.0) / n
    return grads, float(np.sum(weights) / n)


def evaluate(spec: CircuitSpec, params: ModelParams, dataset: Dataset) -> ConfusionMatrix:
    """Confusion counts of the sign-thresholded scores (score >= 0 -> +1)."""
    batch = _as_batch(spec, dataset)
    predicted = np.where(scores(spec, params, batch) >= 0.0, 1, -1)
    return tally(batch.labels.astype(int), predicted)


def accuracy(spec: CircuitSpec, params: ModelParams, dataset: Dataset) -> float:
    cm = evaluate(spec, params, dataset)
    return (cm.tp + cm.tn) / cm.total
