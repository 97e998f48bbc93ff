"""
Shared pytest fixtures used across all feature test packs.
"""
from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np
import pytest

from src.data.models import PatchDataset
from src.data.splitting import partition_clients, split
from src.data.synthetic import PatchSynthesizer
from src.fed.models import ClientConfig, TrainingConfig
from src.optim.optimizers import OptimizerConfig, OptimizerKind
from src.qnn.circuit import build_circuit
from src.qnn.models import CircuitSpec, LabeledExample, ModelParams
from src.qstate.gates import GateKind, gate_matrix


# ---------------------------------------------------------------------------
# Seeds and circuits
# ---------------------------------------------------------------------------

@pytest.fixture
def rng() -> np.random.Generator:
    """Seeded generator for reproducible tests."""
    return np.random.default_rng(42)


@pytest.fixture
def default_spec() -> CircuitSpec:
    """7 qubits, 2 layers, linear entanglement (15 parameters)."""
    return CircuitSpec()


@pytest.fixture
def small_spec() -> CircuitSpec:
    """3 qubits, 2 layers (fast gradient tests)."""
    return CircuitSpec(n_qubits=3, layers=2)


def random_state(rng: np.random.Generator, n_qubits: int, real: bool = False) -> np.ndarray:
    """Normalized random amplitude vector of length 2**n."""
    dim = 1 << n_qubits
    amps = rng.normal(size=dim)
    if not real:
        amps = amps + 1j * rng.normal(size=dim)
    return amps / np.linalg.norm(amps)


def random_params(rng: np.random.Generator, spec: CircuitSpec) -> ModelParams:
    return ModelParams(
        angles=rng.uniform(-np.pi, np.pi, spec.angle_count()).tolist(),
        bias=float(rng.uniform(-0.5, 0.5)),
    )


def random_examples(
    rng: np.random.Generator, count: int, length: int, balanced: bool = True
) -> list[LabeledExample]:
    labels = [1 if i % 2 == 0 else -1 for i in range(count)] if balanced else rng.choice([-1, 1], count).tolist()
    return [
        LabeledExample(features=rng.uniform(0.05, 1.0, length).tolist(), label=int(y))
        for y in labels
    ]


# ---------------------------------------------------------------------------
# Dense-operator oracle
# ---------------------------------------------------------------------------

def dense_operator(kind: GateKind, targets: Sequence[int], n_qubits: int) -> np.ndarray:
    """
    Full 2**n x 2**n operator of *kind* on *targets*, built one basis column
    at a time from the small gate matrix (qubit 0 = most significant bit).
    """
    small = gate_matrix(kind)
    dim = 1 << n_qubits
    full = np.zeros((dim, dim), dtype=np.complex128)
    shifts = [n_qubits - 1 - t for t in targets]
    for col in range(dim):
        sub_col = 0
        for s in shifts:
            sub_col = (sub_col << 1) | ((col >> s) & 1)
        for sub_row in range(small.shape[0]):
            amp = small[sub_row, sub_col]
            if amp == 0:
                continue
            row = col
            for i, s in enumerate(shifts):
                bit = (sub_row >> (len(shifts) - 1 - i)) & 1
                row = (row & ~(1 << s)) | (bit << s)
            full[row, col] += amp
    return full


def dense_score(spec: CircuitSpec, params: ModelParams, features: Sequence[float]) -> float:
    """Classifier score via explicit matrices and an explicit basis-sum readout."""
    dim = 1 << spec.n_qubits
    x = np.zeros(dim)
    x[: len(features)] = features
    state = x / np.linalg.norm(x)
    for op in build_circuit(spec, params):
        state = dense_operator(op.kind, op.targets, spec.n_qubits) @ state
    shift = spec.n_qubits - 1 - spec.readout_qubit
    z = sum(
        abs(state[i]) ** 2 * (1 if ((i >> shift) & 1) == 0 else -1) for i in range(dim)
    )
    return float(z) + params.bias


@pytest.fixture
def dense():
    return dense_operator


# ---------------------------------------------------------------------------
# Labeled data
# ---------------------------------------------------------------------------

@pytest.fixture
def ten_examples(rng) -> list[LabeledExample]:
    """10 balanced random examples of 126 features."""
    return random_examples(rng, 10, 126)


@pytest.fixture
def synthesizer() -> PatchSynthesizer:
    return PatchSynthesizer(seed=42)


@pytest.fixture
def small_pool(synthesizer) -> PatchDataset:
    """40 balanced synthetic patches."""
    return synthesizer.generate(20)


@pytest.fixture
def quick_training() -> TrainingConfig:
    """A few Adam epochs with a larger step (fast federation tests)."""
    return TrainingConfig(
        optimizer=OptimizerConfig(kind=OptimizerKind.ADAM, learning_rate=0.05),
        max_epochs=4,
        patience=4,
    )


def make_clients(
    pool: PatchDataset, weights: Sequence[float], seed: int = 42
) -> list[ClientConfig]:
    """Partition *pool* into len(weights) clients, split 0.75 each."""
    shares = partition_clients(pool, len(weights), seed)
    clients = []
    for i, (share, weight) in enumerate(zip(shares, weights)):
        train, validation = split(share, 0.75, seed + i + 1)
        clients.append(
            ClientConfig(
                client_id=f"c{i + 1}",
                aggregation_weight=weight,
                train_set=train,
                validation_set=validation,
                rng_seed=seed + i + 1,
            )
        )
    return clients


# ---------------------------------------------------------------------------
# Temp directory
# ---------------------------------------------------------------------------

@pytest.fixture
def tmp_dir(tmp_path) -> Path:
    """Provide a clean temporary directory per test."""
    return tmp_path
