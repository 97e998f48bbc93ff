"""
Data models for retinal image patches.

A patch is a 7 wide x 6 high x 3 channel window flattened row by row,
column by column, with R, G, B varying fastest: 126 features in [0, 1].
On disk labels are 0 (healthy) / 1 (affected); the classifier sees -1 / +1.
``PatchLabel`` owns both mappings.
"""
from __future__ import annotations

import enum
import math
from collections import Counter
from dataclasses import dataclass
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from src.qnn.models import LabeledExample

PATCH_WIDTH = 7
PATCH_HEIGHT = 6
PATCH_CHANNELS = 3
PATCH_FEATURES = PATCH_WIDTH * PATCH_HEIGHT * PATCH_CHANNELS


class DataError(ValueError):
    """Base class for data pipeline errors."""


class PatchLabel(str, enum.Enum):
    HEALTHY = "healthy"
    AFFECTED = "affected"

    def to_file(self) -> int:
        return 1 if self is PatchLabel.AFFECTED else 0

    def to_signed(self) -> int:
        return 1 if self is PatchLabel.AFFECTED else -1

    @classmethod
    def from_file(cls, value: int) -> "PatchLabel":
        if value == 1:
            return cls.AFFECTED
        if value == 0:
            return cls.HEALTHY
        raise ValueError(f"file label must be 0 or 1, got {value!r}")

    @classmethod
    def from_signed(cls, value: int) -> "PatchLabel":
        if value == 1:
            return cls.AFFECTED
        if value == -1:
            return cls.HEALTHY
        raise ValueError(f"signed label must be -1 or +1, got {value!r}")


@dataclass(frozen=True)
class RasterImage:
    """RGB image, ``pixels`` is a (height, width, 3) uint8 array."""

    pixels: np.ndarray
    image_id: str = "image"

    def __post_init__(self) -> None:
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 3:
            raise DataError(f"expected (height, width, 3) pixels, got {self.pixels.shape}")

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass(frozen=True)
class LesionMask:
    """Boolean (height, width) array, True = lesion pixel."""

    flags: np.ndarray

    @property
    def height(self) -> int:
        return self.flags.shape[0]

    @property
    def width(self) -> int:
        return self.flags.shape[1]


class Provenance(BaseModel):
    model_config = ConfigDict(frozen=True)

    image_id: str
    x: int = Field(..., ge=0, description="Left column of the window")
    y: int = Field(..., ge=0, description="Top row of the window")


class Patch(BaseModel):
    model_config = ConfigDict(frozen=True)

    features: list[float] = Field(
        ..., min_length=PATCH_FEATURES, max_length=PATCH_FEATURES
    )
    label: PatchLabel
    provenance: Optional[Provenance] = None

    @field_validator("features")
    @classmethod
    def _unit_interval(cls, v: list[float]) -> list[float]:
        for i, f in enumerate(v):
            if not (math.isfinite(f) and 0.0 <= f <= 1.0):
                raise ValueError(f"feature {i} must be in [0, 1], got {f!r}")
        return v

    def to_example(self) -> LabeledExample:
        return LabeledExample(features=self.features, label=self.label.to_signed())


class PatchDataset(BaseModel):
    model_config = ConfigDict(frozen=True)

    dataset_id: str = "patches"
    patches: list[Patch] = Field(default_factory=list)

    def __len__(self) -> int:
        return len(self.patches)

    @property
    def class_counts(self) -> dict[PatchLabel, int]:
        counts = Counter(p.label for p in self.patches)
        return {label: counts.get(label, 0) for label in PatchLabel}

    @property
    def balanced(self) -> bool:
        counts = self.class_counts
        return counts[PatchLabel.HEALTHY] == counts[PatchLabel.AFFECTED]

    def by_label(self, label: PatchLabel) -> list[Patch]:
        return [p for p in self.patches if p.label == label]

    def to_examples(self) -> list[LabeledExample]:
        return [p.to_example() for p in self.patches]
