"""
Pydantic models for federated training: who takes part, how each client
trains, and what every round produces.

``RosterEntry`` is all the aggregation server needs to know about a client
(id and aggregation weight).  ``ClientConfig`` adds the client's private
data and RNG seed and only ever exists where that data lives.
"""
from __future__ import annotations

from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from src.data.models import PatchDataset
from src.metrics.classification import ConfusionMatrix
from src.optim.optimizers import OptimizerConfig
from src.qnn.models import CircuitSpec, ModelParams


class FederationError(ValueError):
    """Base class for federation errors."""


class EmptyUpdateSet(FederationError):
    pass


class LengthMismatch(FederationError):
    pass


class NonPositiveWeight(FederationError):
    pass


class ClientTrainingError(FederationError):
    def __init__(self, client_id: str, cause: Exception):
        super().__init__(f"client {client_id!r} failed: {cause}")
        self.client_id = client_id
        self.cause = cause


class RosterEntry(BaseModel):
    model_config = ConfigDict(frozen=True)

    client_id: str = Field(..., min_length=1)
    aggregation_weight: float = Field(1.0, gt=0, allow_inf_nan=False)


class ClientConfig(RosterEntry):
    """A client together with its local data."""

    train_set: PatchDataset
    validation_set: PatchDataset
    rng_seed: int = Field(42, ge=0, lt=2**64)

    @field_validator("train_set", "validation_set")
    @classmethod
    def _nonempty(cls, v: PatchDataset) -> PatchDataset:
        if len(v) == 0:
            raise ValueError(f"dataset {v.dataset_id!r} is empty")
        return v


class TrainingConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    optimizer: OptimizerConfig = Field(default_factory=OptimizerConfig)
    max_epochs: int = Field(100, ge=1)
    patience: int = Field(10, ge=1)
    shuffle_each_epoch: bool = True

    @model_validator(mode="after")
    def _patience_within_budget(self) -> "TrainingConfig":
        if self.patience > self.max_epochs:
            raise ValueError(
                f"patience {self.patience} exceeds max_epochs {self.max_epochs}"
            )
        return self


class FederationPlan(BaseModel):
    model_config = ConfigDict(frozen=True)

    clients: list[RosterEntry] = Field(..., min_length=1)
    rounds_max: int = Field(5, ge=1)
    target_accuracy: Optional[float] = Field(None, gt=0, le=1)
    circuit: CircuitSpec = Field(default_factory=CircuitSpec)
    training: TrainingConfig = Field(default_factory=TrainingConfig)
    parallel: bool = Field(False, description="Train clients of a round in threads")

    @field_validator("clients")
    @classmethod
    def _unique_ids(cls, v: list[RosterEntry]) -> list[RosterEntry]:
        ids = [c.client_id for c in v]
        if len(set(ids)) != len(ids):
            raise ValueError(f"client ids must be unique, got {ids}")
        return v

    def weight_of(self, client_id: str) -> float:
        for c in self.clients:
            if c.client_id == client_id:
                return c.aggregation_weight
        raise KeyError(client_id)

    def client_ids(self) -> list[str]:
        """Roster in aggregation order (sorted by id)."""
        return sorted(c.client_id for c in self.clients)


# ---------------------------------------------------------------------------
# Results
# ---------------------------------------------------------------------------

class EpochRecord(BaseModel):
    model_config = ConfigDict(frozen=True)

    epoch: int = Field(..., ge=1)
    loss: float
    train_accuracy: float = Field(..., ge=0, le=1)
    validation_accuracy: float = Field(..., ge=0, le=1)
    params: Optional[ModelParams] = Field(None, description="Parameters at the end of the epoch")


class ClientRoundResult(BaseModel):
    """One client's local training in one round ("before FL" numbers)."""

    model_config = ConfigDict(frozen=True)

    client_id: str
    best_params: ModelParams
    best_validation_accuracy: float
    epochs_run: int
    history: list[EpochRecord]
    local_confusion: ConfusionMatrix


class ClientEvaluation(BaseModel):
    """The aggregated model on one client's validation set ("after FL")."""

    model_config = ConfigDict(frozen=True)

    client_id: str
    confusion: ConfusionMatrix

    @property
    def accuracy(self) -> float:
        return self.confusion.accuracy


class RoundRecord(BaseModel):
    model_config = ConfigDict(frozen=True)

    round_index: int = Field(..., ge=0)
    clients: list[ClientRoundResult]
    global_params: ModelParams
    global_evaluations: list[ClientEvaluation]

    def reached(self, target: Optional[float]) -> bool:
        if target is None:
            return False
        return all(e.accuracy >= target for e in self.global_evaluations)
