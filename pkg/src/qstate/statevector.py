"""
Statevector simulation.

An n-qubit register is a complex128 vector of length 2**n.  Qubit 0 is the
most significant bit of the basis index:

    index = sum(bit(q_k) * 2**(n - 1 - k))

so reshaping the vector to ``(2,) * n`` puts qubit k on axis k.  Gates act on
that tensor view by strided slice arithmetic over the addressed axes; no
2**n x 2**n operator is ever built.

The ``*_batch`` functions take a ``(batch, 2**n)`` array and are what the
classifier uses to push a whole dataset through a circuit at once.
``StateVector`` wraps a single read-only vector and is safe to share.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .gates import GateKind, gate_matrix

NORM_TOLERANCE = 1e-10


class QStateError(ValueError):
    """Base class for statevector errors."""


class ArityMismatch(QStateError):
    pass


class DuplicateTarget(QStateError):
    pass


class IndexOutOfRange(QStateError):
    pass


class ZeroVector(QStateError):
    pass


class TooLong(QStateError):
    pass


class NonFiniteFeatures(QStateError):
    pass


class NotNormalized(QStateError):
    pass


@dataclass(frozen=True)
class StateVector:
    """Immutable n-qubit pure state."""

    n_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self) -> None:
        if self.n_qubits < 1:
            raise QStateError(f"n_qubits must be positive, got {self.n_qubits}")
        amps = np.array(self.amplitudes, dtype=np.complex128).reshape(-1)
        if amps.shape[0] != 1 << self.n_qubits:
            raise QStateError(
                f"{self.n_qubits} qubits need {1 << self.n_qubits} amplitudes, "
                f"got {amps.shape[0]}"
            )
        if not np.all(np.isfinite(amps)):
            raise QStateError("amplitudes must be finite")
        norm_sq = float(np.sum(np.abs(amps) ** 2))
        if abs(norm_sq - 1.0) > NORM_TOLERANCE:
            raise NotNormalized(f"squared norm is {norm_sq!r}, expected 1")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def zero(cls, n_qubits: int) -> "StateVector":
        """The |0...0> state."""
        amps = np.zeros(1 << n_qubits, dtype=np.complex128)
        amps[0] = 1.0
        return cls(n_qubits, amps)

    @classmethod
    def basis(cls, n_qubits: int, index: int) -> "StateVector":
        if not 0 <= index < 1 << n_qubits:
            raise IndexOutOfRange(f"basis index {index} out of range for {n_qubits} qubits")
        amps = np.zeros(1 << n_qubits, dtype=np.complex128)
        amps[index] = 1.0
        return cls(n_qubits, amps)

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def __len__(self) -> int:
        return self.amplitudes.shape[0]


# ---------------------------------------------------------------------------
# Validation helpers
# ---------------------------------------------------------------------------

def _check_qubit(qubit: int, n_qubits: int) -> None:
    if not 0 <= qubit < n_qubits:
        raise IndexOutOfRange(f"qubit {qubit} out of range for {n_qubits} qubits")


def _check_targets(kind: GateKind, targets: Sequence[int], n_qubits: int) -> tuple[int, ...]:
    targets = tuple(int(t) for t in targets)
    if len(targets) != kind.arity:
        raise ArityMismatch(
            f"{kind.name.value} acts on {kind.arity} qubit(s), got targets {targets}"
        )
    for t in targets:
        _check_qubit(t, n_qubits)
    if len(set(targets)) != len(targets):
        raise DuplicateTarget(f"targets must be distinct, got {targets}")
    return targets


# ---------------------------------------------------------------------------
# Gate application
# ---------------------------------------------------------------------------

def _apply_matrix(
    amps: np.ndarray, matrix: np.ndarray, targets: tuple[int, ...], n_qubits: int
) -> np.ndarray:
    batch = amps.shape[0]
    k = len(targets)
    tensor = amps.reshape((batch,) + (2,) * n_qubits)
    src = [t + 1 for t in targets]
    dst = list(range(n_qubits + 1 - k, n_qubits + 1))
    moved = np.moveaxis(tensor, src, dst)
    flat = moved.reshape(moved.shape[: n_qubits + 1 - k] + (1 << k,))

    # Only the nonzero entries contribute, so permutation gates are pure copies.
    out = np.zeros_like(flat)
    for row in range(1 << k):
        for col in np.flatnonzero(matrix[row]):
            out[..., row] += matrix[row, col] * flat[..., col]

    out = np.moveaxis(out.reshape(moved.shape), dst, src)
    return np.ascontiguousarray(out).reshape(batch, 1 << n_qubits)


def apply_gate_batch(
    amps: np.ndarray, kind: GateKind, targets: Sequence[int], n_qubits: int
) -> np.ndarray:
    """Apply *kind* to every row of a ``(batch, 2**n)`` amplitude array."""
    targets = _check_targets(kind, targets, n_qubits)
    amps = np.asarray(amps, dtype=np.complex128)
    return _apply_matrix(amps, gate_matrix(kind), targets, n_qubits)


def apply_gate(state: StateVector, kind: GateKind, targets: Sequence[int]) -> StateVector:
    """
    Return the state after *kind* acts on *targets*.

    Target order: ``(control, target)`` for CNOT, ``(a, b)`` for SWAP and
    ``(control1, control2, target)`` for Toffoli.
    """
    out = apply_gate_batch(
        state.amplitudes.reshape(1, -1), kind, targets, state.n_qubits
    )
    return StateVector(state.n_qubits, out[0])


# ---------------------------------------------------------------------------
# Encoding
# ---------------------------------------------------------------------------

def amplitude_encode_batch(features: np.ndarray, n_qubits: int) -> np.ndarray:
    """
    Amplitude-encode every row of a 2-D feature array.

    Rows are zero-padded at the tail to 2**n and L2-normalized; row i of the
    result is a real-valued statevector whose amplitude j is feature j.
    """
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2:
        raise QStateError(f"expected a 2-D feature array, got shape {x.shape}")
    dim = 1 << n_qubits
    length = x.shape[1]
    if length == 0:
        raise QStateError("feature vectors must be nonempty")
    if length > dim:
        raise TooLong(f"{length} features do not fit {n_qubits} qubits ({dim} amplitudes)")
    if not np.all(np.isfinite(x)):
        raise NonFiniteFeatures("features must be finite")

    peaks = np.max(np.abs(x), axis=1)
    zero_rows = np.flatnonzero(peaks == 0.0)
    if zero_rows.size:
        raise ZeroVector(f"all-zero feature vector at row {int(zero_rows[0])}")

    # rows scaled to max |x| = 1 first so the norm neither underflows nor overflows
    scaled = x / peaks[:, None]
    out = np.zeros((x.shape[0], dim), dtype=np.complex128)
    out[:, :length] = scaled / np.linalg.norm(scaled, axis=1)[:, None]
    return out


def amplitude_encode(features: Sequence[float] | np.ndarray, n_qubits: int) -> StateVector:
    """Encode one feature vector as an n-qubit state (tail zero-padding)."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 1:
        raise QStateError(f"expected a 1-D feature vector, got shape {x.shape}")
    return StateVector(n_qubits, amplitude_encode_batch(x.reshape(1, -1), n_qubits)[0])


# ---------------------------------------------------------------------------
# Measurement
# ---------------------------------------------------------------------------

def expectation_z_batch(amps: np.ndarray, qubit: int, n_qubits: int) -> np.ndarray:
    """<Z> on *qubit* for every row of a ``(batch, 2**n)`` array."""
    _check_qubit(qubit, n_qubits)
    probs = np.abs(np.asarray(amps)) ** 2
    split = probs.reshape(probs.shape[0], 1 << qubit, 2, 1 << (n_qubits - qubit - 1))
    p = split.sum(axis=(1, 3))
    return np.clip(p[:, 0] - p[:, 1], -1.0, 1.0)


def expectation_z(state: StateVector, qubit: int) -> float:
    """P(bit = 0) - P(bit = 1) for *qubit*."""
    value = expectation_z_batch(state.amplitudes.reshape(1, -1), qubit, state.n_qubits)
    return float(value[0])

