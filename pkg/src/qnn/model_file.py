"""
Model file format.

A saved model is one JSON document:

    {"format_version": 1, "n_qubits": 7, "layers": 2,
     "entanglement": "linear", "angles": [...], "bias": 0.0}

Floats are written in shortest round-trip form, so a save/load cycle
reproduces every parameter bitwise.
"""
from __future__ import annotations

from pathlib import Path
from typing import Literal

from pydantic import BaseModel, Field, ValidationError, model_validator

from .models import CircuitSpec, Entanglement, ModelFileError, ModelParams

FORMAT_VERSION = 1


class ModelDocument(BaseModel):
    format_version: Literal[1] = FORMAT_VERSION
    n_qubits: int = Field(..., ge=1)
    layers: int = Field(..., ge=1)
    entanglement: Entanglement
    angles: list[float]
    bias: float

    @model_validator(mode="after")
    def _angle_count(self) -> "ModelDocument":
        expected = self.n_qubits * self.layers
        if len(self.angles) != expected:
            raise ValueError(
                f"expected {expected} angles for {self.layers} layers x "
                f"{self.n_qubits} qubits, got {len(self.angles)}"
            )
        return self

    @classmethod
    def of(cls, spec: CircuitSpec, params: ModelParams) -> "ModelDocument":
        params.check(spec)
        return cls(
            n_qubits=spec.n_qubits,
            layers=spec.layers,
            entanglement=spec.entanglement,
            angles=list(params.angles),
            bias=params.bias,
        )

    def unpack(self) -> tuple[CircuitSpec, ModelParams]:
        spec = CircuitSpec(
            n_qubits=self.n_qubits, layers=self.layers, entanglement=self.entanglement
        )
        return spec, ModelParams(angles=list(self.angles), bias=self.bias)


def model_to_json(spec: CircuitSpec, params: ModelParams) -> str:
    return ModelDocument.of(spec, params).model_dump_json(indent=2)


def model_from_json(text: str) -> tuple[CircuitSpec, ModelParams]:
    try:
        return ModelDocument.model_validate_json(text).unpack()
    except ValidationError as exc:
        raise ModelFileError(f"invalid model document: {exc.errors()[0]['msg']}") from exc


def save_model(path: str | Path, spec: CircuitSpec, params: ModelParams) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(model_to_json(spec, params) + "\n", encoding="utf-8")
    return path


def load_model(path: str | Path) -> tuple[CircuitSpec, ModelParams]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"model file not found: {path}")
    return model_from_json(path.read_text(encoding="utf-8"))
