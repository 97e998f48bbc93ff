"""
Gate set of the simulator.

Pauli X/Y/Z, the three axis rotations, CNOT, SWAP and Toffoli.  A gate is a
small frozen pydantic value (``GateKind``): the gate name plus, for the
rotations, the angle in radians.  ``gate_matrix`` returns the unitary in the
basis ordering used everywhere in this package: for multi-qubit gates the
first addressed qubit is the most significant bit of the row index.
"""
from __future__ import annotations

import enum
import math
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator


class GateName(str, enum.Enum):
    PAULI_X = "x"
    PAULI_Y = "y"
    PAULI_Z = "z"
    RX = "rx"
    RY = "ry"
    RZ = "rz"
    CNOT = "cnot"
    SWAP = "swap"
    TOFFOLI = "toffoli"


ROTATIONS: frozenset[GateName] = frozenset({GateName.RX, GateName.RY, GateName.RZ})

ARITY: dict[GateName, int] = {
    GateName.PAULI_X: 1,
    GateName.PAULI_Y: 1,
    GateName.PAULI_Z: 1,
    GateName.RX: 1,
    GateName.RY: 1,
    GateName.RZ: 1,
    GateName.CNOT: 2,
    GateName.SWAP: 2,
    GateName.TOFFOLI: 3,
}


class GateKind(BaseModel):
    """One gate of the set; rotations carry their angle."""

    model_config = ConfigDict(frozen=True)

    name: GateName = Field(..., description="Which gate")
    theta: Optional[float] = Field(
        None, description="Rotation angle in radians (rotations only)"
    )

    @model_validator(mode="after")
    def _theta_matches_kind(self) -> "GateKind":
        if self.name in ROTATIONS:
            if self.theta is None or not math.isfinite(self.theta):
                raise ValueError(
                    f"{self.name.value} needs a finite theta, got {self.theta!r}"
                )
        elif self.theta is not None:
            raise ValueError(f"{self.name.value} takes no angle, got {self.theta!r}")
        return self

    @property
    def arity(self) -> int:
        return ARITY[self.name]


PAULI_X = GateKind(name=GateName.PAULI_X)
PAULI_Y = GateKind(name=GateName.PAULI_Y)
PAULI_Z = GateKind(name=GateName.PAULI_Z)
CNOT = GateKind(name=GateName.CNOT)
SWAP = GateKind(name=GateName.SWAP)
TOFFOLI = GateKind(name=GateName.TOFFOLI)


def rx(theta: float) -> GateKind:
    return GateKind(name=GateName.RX, theta=theta)


def ry(theta: float) -> GateKind:
    return GateKind(name=GateName.RY, theta=theta)


def rz(theta: float) -> GateKind:
    return GateKind(name=GateName.RZ, theta=theta)


# ---------------------------------------------------------------------------
# Fixed matrices
# ---------------------------------------------------------------------------

_FIXED: dict[GateName, np.ndarray] = {
    GateName.PAULI_X: np.array([[0, 1], [1, 0]], dtype=np.complex128),
    GateName.PAULI_Y: np.array([[0, -1j], [1j, 0]], dtype=np.complex128),
    GateName.PAULI_Z: np.array([[1, 0], [0, -1]], dtype=np.complex128),
    GateName.CNOT: np.array(
        [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]],
        dtype=np.complex128,
    ),
    GateName.SWAP: np.array(
        [[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]],
        dtype=np.complex128,
    ),
}

_toffoli = np.eye(8, dtype=np.complex128)
_toffoli[[6, 7]] = _toffoli[[7, 6]]
_FIXED[GateName.TOFFOLI] = _toffoli

for _matrix in _FIXED.values():
    _matrix.setflags(write=False)


def gate_matrix(kind: GateKind) -> np.ndarray:
    """Return the unitary of *kind* (2x2, 4x4 or 8x8, complex128)."""
    if kind.name not in ROTATIONS:
        return _FIXED[kind.name]

    half = kind.theta / 2.0
    c, s = math.cos(half), math.sin(half)
    if kind.name == GateName.RX:
        return np.array([[c, -1j * s], [-1j * s, c]], dtype=np.complex128)
    if kind.name == GateName.RY:
        return np.array([[c, -s], [s, c]], dtype=np.complex128)
    return np.array(
        [[complex(c, -s), 0], [0, complex(c, s)]], dtype=np.complex128
    )
