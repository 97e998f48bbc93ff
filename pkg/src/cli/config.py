"""
Run configuration.

A run is described by one ``RunConfig``.  Values come from an optional JSON
config file whose keys mirror the command-line flags (``--lr`` <-> ``lr``,
``--target-accuracy`` <-> ``target_accuracy``); flags given on the command
line override the file.  The resolved config, every default included, is
written to ``config.snapshot`` in the run directory.
"""
from __future__ import annotations

import enum
import json
from pathlib import Path
from typing import Any, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from src.fed.models import FederationPlan, RosterEntry, TrainingConfig
from src.optim.optimizers import OptimizerConfig, OptimizerKind
from src.qnn.models import CircuitSpec, Entanglement

DEFAULT_SEED = 42


class ConfigError(ValueError):
    """Invalid configuration; ``field`` is the dotted path of the culprit."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}" if field else message)
        self.field = field


class Mode(str, enum.Enum):
    TRAIN_LOCAL = "train-local"
    FEDERATE = "federate"
    SERVE = "serve"
    CLIENT = "client"
    EVALUATE = "evaluate"
    EXTRACT_PATCHES = "extract-patches"
    SPLIT = "split"
    SYNTHESIZE = "synthesize"
    COMPARE_OPTIMIZERS = "compare-optimizers"


def parse_weights(text: str) -> list[float]:
    """``"5:5:4"`` -> ``[5.0, 5.0, 4.0]``; every component must be positive."""
    parts = text.split(":")
    weights: list[float] = []
    for i, part in enumerate(parts):
        part = part.strip()
        if not part:
            raise ConfigError("weights", f"component {i + 1} of {text!r} is empty")
        try:
            value = float(part)
        except ValueError:
            raise ConfigError("weights", f"component {part!r} is not a number") from None
        if not value > 0 or value == float("inf"):
            raise ConfigError("weights", f"component {part!r} must be positive and finite")
        weights.append(value)
    return weights


class RunConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    mode: Mode
    seed: int = Field(DEFAULT_SEED, ge=0, description="Master seed for splits, partitions and shuffles")
    out: Path = Field(Path("runs/latest"), description="Run directory")

    # circuit
    qubits: int = Field(7, ge=1)
    layers: int = Field(2, ge=1)
    entanglement: Entanglement = Entanglement.LINEAR

    # optimizer and local training
    optimizer: OptimizerKind = OptimizerKind.ADAM
    lr: float = Field(0.01, gt=0, allow_inf_nan=False)
    momentum: float = Field(0.9, ge=0, lt=1)
    beta1: float = Field(0.9, ge=0, lt=1)
    beta2: float = Field(0.999, ge=0, lt=1)
    epsilon: float = Field(1e-8, gt=0)
    bias_correction: bool = False
    epochs: int = Field(100, ge=1)
    patience: int = Field(10, ge=1)
    shuffle: bool = True

    # federation
    rounds: int = Field(5, ge=1)
    clients: int = Field(3, ge=1, description="Client count when no weights are given")
    weights: Optional[list[float]] = None
    target_accuracy: Optional[float] = Field(None, gt=0, le=1)
    parallel: bool = False

    # data
    data: Optional[Path] = Field(None, description="Patch CSV: a pool, or the dataset to split/evaluate")
    client_data: list[Path] = Field(default_factory=list, description="One patch CSV per client")
    train: Optional[Path] = None
    validation: Optional[Path] = None
    synthetic: bool = False
    synthetic_per_class: int = Field(471, ge=1)
    train_fraction: float = Field(0.75, gt=0, lt=1)
    model: Optional[Path] = None
    image: Optional[Path] = None
    mask: Optional[Path] = None
    per_class: int = Field(1, ge=1)

    # network
    listen: str = "127.0.0.1:7800"
    connect: Optional[str] = None
    client_id: Optional[str] = None
    weight: Optional[float] = Field(None, gt=0)
    timeout: float = Field(300.0, gt=0)

    log_level: str = "INFO"

    @field_validator("weights", mode="before")
    @classmethod
    def _weights_from_string(cls, v: Any) -> Any:
        if isinstance(v, str):
            return parse_weights(v)
        return v

    @field_validator("weights")
    @classmethod
    def _positive_weights(cls, v: Optional[list[float]]) -> Optional[list[float]]:
        if v is not None:
            if not v:
                raise ValueError("at least one weight is required")
            bad = [w for w in v if not w > 0]
            if bad:
                raise ValueError(f"weights must be positive, got {bad}")
        return v

    @model_validator(mode="after")
    def _mode_requirements(self) -> "RunConfig":
        if self.patience > self.epochs:
            raise ValueError(f"patience {self.patience} exceeds epochs {self.epochs}")
        needs: dict[Mode, list[str]] = {
            Mode.EVALUATE: ["model", "data"],
            Mode.EXTRACT_PATCHES: ["image", "mask"],
            Mode.SPLIT: ["data"],
            Mode.CLIENT: ["connect", "client_id"],
        }
        for name in needs.get(self.mode, []):
            if getattr(self, name) is None:
                raise ValueError(f"mode {self.mode.value} requires {name}")
        if self.mode in (Mode.TRAIN_LOCAL, Mode.FEDERATE, Mode.COMPARE_OPTIMIZERS):
            if not (self.synthetic or self.data or self.client_data):
                raise ValueError(f"mode {self.mode.value} requires data, client_data or synthetic")
        if self.mode == Mode.CLIENT:
            if not ((self.train and self.validation) or self.data or self.synthetic):
                raise ValueError("mode client requires train and validation, data, or synthetic")
        if self.client_data and self.weights and len(self.client_data) != len(self.weights):
            raise ValueError(
                f"{len(self.client_data)} client_data files but {len(self.weights)} weights"
            )
        return self

    # ------------------------------------------------------------------
    # Derived configuration objects
    # ------------------------------------------------------------------

    def circuit(self) -> CircuitSpec:
        return CircuitSpec(n_qubits=self.qubits, layers=self.layers, entanglement=self.entanglement)

    def optimizer_config(self, kind: Optional[OptimizerKind] = None) -> OptimizerConfig:
        return OptimizerConfig(
            kind=kind or self.optimizer,
            learning_rate=self.lr,
            momentum=self.momentum,
            beta1=self.beta1,
            beta2=self.beta2,
            epsilon=self.epsilon,
            bias_correction=self.bias_correction,
        )

    def training(self, kind: Optional[OptimizerKind] = None) -> TrainingConfig:
        return TrainingConfig(
            optimizer=self.optimizer_config(kind),
            max_epochs=self.epochs,
            patience=self.patience,
            shuffle_each_epoch=self.shuffle,
        )

    def client_count(self) -> int:
        if self.weights:
            return len(self.weights)
        if self.client_data:
            return len(self.client_data)
        return self.clients

    def client_ids(self) -> list[str]:
        return [f"c{i + 1}" for i in range(self.client_count())]

    def client_seed(self, index: int) -> int:
        """Seed of the client at 0-based roster position *index*."""
        return self.seed + index + 1

    def roster(self) -> list[RosterEntry]:
        weights = self.weights or [1.0] * self.client_count()
        return [
            RosterEntry(client_id=cid, aggregation_weight=w)
            for cid, w in zip(self.client_ids(), weights)
        ]

    def plan(self, clients: Optional[list[RosterEntry]] = None,
             kind: Optional[OptimizerKind] = None) -> FederationPlan:
        return FederationPlan(
            clients=clients if clients is not None else self.roster(),
            rounds_max=self.rounds,
            target_accuracy=self.target_accuracy,
            circuit=self.circuit(),
            training=self.training(kind),
            parallel=self.parallel,
        )

    def snapshot(self) -> str:
        """Resolved config as JSON, without the run directory it is written into."""
        return self.model_dump_json(indent=2, exclude={"out"})


def _field_path(exc: ValidationError) -> tuple[str, str]:
    first = exc.errors()[0]
    return ".".join(str(p) for p in first["loc"]), first["msg"]


def load_config_file(path: str | Path) -> dict[str, Any]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc}") from exc
    try:
        document = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(document, dict):
        raise ConfigError("config", f"{path} must hold a JSON object")
    return {key.replace("-", "_"): value for key, value in document.items()}


def resolve_config(
    overrides: dict[str, Any], config_path: Optional[str | Path] = None
) -> RunConfig:
    """File values first, then every override that is not ``None``."""
    values: dict[str, Any] = load_config_file(config_path) if config_path else {}
    values.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return RunConfig.model_validate(values)
    except ValidationError as exc:
        field, message = _field_path(exc)
        raise ConfigError(field, message) from exc
