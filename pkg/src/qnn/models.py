"""
Pydantic models for the variational classifier.

``CircuitSpec`` fixes the ansatz shape (qubits, layers, CNOT topology),
``ModelParams`` holds the trainable values (one RY angle per qubit per layer
plus a classical bias), ``LabeledExample`` is one input with its +/-1 label.
The default spec is the 7-qubit, 2-layer, nearest-neighbour circuit: 14
angles + 1 bias = 15 learnable parameters.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Literal, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from src.qstate.statevector import StateVector


class QnnError(ValueError):
    """Base class for classifier errors."""


class ParamCountMismatch(QnnError):
    pass


class EmptyDataset(QnnError):
    pass


class ModelFileError(QnnError):
    pass


class Entanglement(str, enum.Enum):
    LINEAR = "linear"
    CIRCULAR = "circular"
    FULL = "full"


class CircuitSpec(BaseModel):
    """Shape of the alternating RY / CNOT ansatz."""

    model_config = ConfigDict(frozen=True)

    n_qubits: int = Field(7, ge=1, description="Register width")
    layers: int = Field(2, ge=1, description="Rotation + entanglement blocks")
    entanglement: Entanglement = Field(
        Entanglement.LINEAR, description="CNOT connectivity inside each block"
    )

    def angle_count(self) -> int:
        return self.layers * self.n_qubits

    def parameter_count(self) -> int:
        return self.angle_count() + 1

    @property
    def readout_qubit(self) -> int:
        return self.n_qubits - 1

    def entangling_pairs(self) -> list[tuple[int, int]]:
        """(control, target) pairs of one block, ascending control order."""
        n = self.n_qubits
        if self.entanglement == Entanglement.FULL:
            return [(i, j) for i in range(n) for j in range(i + 1, n)]
        pairs = [(q, q + 1) for q in range(n - 1)]
        if self.entanglement == Entanglement.CIRCULAR and n > 1:
            pairs.append((n - 1, 0))
        return pairs


class ModelParams(BaseModel):
    """RY angles (radians, layer-major) plus the additive readout bias."""

    model_config = ConfigDict(frozen=True)

    angles: list[float] = Field(..., description="layers * n_qubits RY angles")
    bias: float = Field(0.0, description="Classical bias added to <Z>")

    @field_validator("angles")
    @classmethod
    def _finite_angles(cls, v: list[float]) -> list[float]:
        if not all(math.isfinite(a) for a in v):
            raise ValueError("angles must be finite")
        return v

    @field_validator("bias")
    @classmethod
    def _finite_bias(cls, v: float) -> float:
        if not math.isfinite(v):
            raise ValueError("bias must be finite")
        return v

    @classmethod
    def zeros(cls, spec: CircuitSpec) -> "ModelParams":
        return cls(angles=[0.0] * spec.angle_count(), bias=0.0)

    @classmethod
    def from_vector(cls, vector: Sequence[float] | np.ndarray) -> "ModelParams":
        """Inverse of ``to_vector``: angles first, bias last."""
        values = [float(v) for v in vector]
        if not values:
            raise ParamCountMismatch("parameter vector is empty")
        return cls(angles=values[:-1], bias=values[-1])

    def to_vector(self) -> np.ndarray:
        return np.array(self.angles + [self.bias], dtype=np.float64)

    def check(self, spec: CircuitSpec) -> None:
        if len(self.angles) != spec.angle_count():
            raise ParamCountMismatch(
                f"circuit needs {spec.angle_count()} angles, got {len(self.angles)}"
            )


class LabeledExample(BaseModel):
    """One classifier input: +1 = affected (microaneurysm), -1 = healthy."""

    model_config = ConfigDict(frozen=True)

    features: list[float] = Field(..., min_length=1)
    label: Literal[-1, 1]


@dataclass(frozen=True)
class ForwardTrace:
    score: float
    predicted_label: int
    final_state: Optional[StateVector] = None
