"""
Gradient Descent, Nesterov momentum and Adam over a flat parameter vector.

The classifier's angles and bias share one vector (angles first, bias
last) and one optimizer state, so every parameter, the bias included, gets
its own first and second moment.

Adam defaults to the form used by the original federated QNN experiments:
no bias correction and epsilon *inside* the square root,

    v' = b1 v + (1 - b1) g
    s' = b2 s + (1 - b2) g^2
    p' = p - lr v' / sqrt(s' + eps)

``bias_correction=True`` switches to the textbook variant
(v_hat / (sqrt(s_hat) + eps)).

Nesterov needs the gradient at the look-ahead point p + mu v; the training
loop asks ``lookahead_point`` where to evaluate, then passes that gradient
to ``step``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field


class OptimizerError(ValueError):
    """Base class for optimizer errors."""


class DimensionMismatch(OptimizerError):
    pass


class NonFiniteGradient(OptimizerError):
    pass


class WrongOptimizerKind(OptimizerError):
    pass


class OptimizerKind(str, enum.Enum):
    GD = "gd"
    NESTEROV = "nesterov"
    ADAM = "adam"


class OptimizerConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: OptimizerKind = Field(OptimizerKind.ADAM, description="Update rule")
    learning_rate: float = Field(0.01, gt=0, allow_inf_nan=False)
    momentum: float = Field(0.9, ge=0, lt=1, description="Nesterov mu")
    beta1: float = Field(0.9, ge=0, lt=1)
    beta2: float = Field(0.999, ge=0, lt=1)
    epsilon: float = Field(1e-8, gt=0, allow_inf_nan=False)
    bias_correction: bool = Field(
        False, description="Textbook Adam instead of the uncorrected form"
    )


@dataclass(frozen=True)
class OptimizerState:
    step_count: int
    first_moment: np.ndarray
    second_moment: np.ndarray

    @classmethod
    def initial(cls, dim: int) -> "OptimizerState":
        return cls(0, np.zeros(dim, dtype=np.float64), np.zeros(dim, dtype=np.float64))

    @property
    def dim(self) -> int:
        return self.first_moment.shape[0]


def _vector(values: Sequence[float] | np.ndarray, name: str) -> np.ndarray:
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1:
        raise DimensionMismatch(f"{name} must be a flat vector, got shape {v.shape}")
    return v


def lookahead_point(
    config: OptimizerConfig, state: OptimizerState, params: Sequence[float] | np.ndarray
) -> np.ndarray:
    """Where Nesterov wants the next gradient evaluated: p + mu v."""
    if config.kind != OptimizerKind.NESTEROV:
        raise WrongOptimizerKind(f"look-ahead is only defined for nesterov, not {config.kind.value}")
    p = _vector(params, "params")
    if p.shape[0] != state.dim:
        raise DimensionMismatch(f"params have {p.shape[0]} entries, state has {state.dim}")
    return p + config.momentum * state.first_moment


def step(
    config: OptimizerConfig,
    state: OptimizerState,
    params: Sequence[float] | np.ndarray,
    grads: Sequence[float] | np.ndarray,
) -> tuple[np.ndarray, OptimizerState]:
    """One update; returns (new params, new state).  Inputs are not mutated."""
    p = _vector(params, "params")
    g = _vector(grads, "grads")
    if p.shape != g.shape or p.shape[0] != state.dim:
        raise DimensionMismatch(
            f"params {p.shape[0]}, grads {g.shape[0]} and state {state.dim} must agree"
        )
    if not np.all(np.isfinite(g)):
        raise NonFiniteGradient("gradient contains NaN or Inf")

    t = state.step_count + 1
    lr = config.learning_rate

    if config.kind == OptimizerKind.GD:
        return p - lr * g, OptimizerState(t, state.first_moment, state.second_moment)

    if config.kind == OptimizerKind.NESTEROV:
        v = config.momentum * state.first_moment - lr * g
        return p + v, OptimizerState(t, v, state.second_moment)

    b1, b2, eps = config.beta1, config.beta2, config.epsilon
    v = b1 * state.first_moment + (1.0 - b1) * g
    s = b2 * state.second_moment + (1.0 - b2) * (g * g)
    if config.bias_correction:
        v_hat = v / (1.0 - b1**t)
        s_hat = s / (1.0 - b2**t)
        new_p = p - lr * v_hat / (np.sqrt(s_hat) + eps)
    else:
        new_p = p - lr * v / np.sqrt(s + eps)
    return new_p, OptimizerState(t, v, s)
