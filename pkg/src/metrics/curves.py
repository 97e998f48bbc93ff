"""
Plot-ready training curves.

    epoch,loss,train_accuracy,validation_accuracy
    1,0.9731...,0.5361...,0.5189...

One row per epoch of a local training run, epochs starting at 1.

The companion trajectory file follows every trainable parameter through
the same epochs:

    epoch,angle_000,...,angle_013,bias
    1,0.0412...,...,-0.0137...
"""
from __future__ import annotations

from pathlib import Path
from typing import Sequence

import pyarrow as pa
import pyarrow.csv as pacsv

from src.data.patch_file import plain_csv
from src.fed.models import EpochRecord

CURVE_SCHEMA = pa.schema(
    [
        pa.field("epoch", pa.int64(), nullable=False),
        pa.field("loss", pa.float64(), nullable=False),
        pa.field("train_accuracy", pa.float64(), nullable=False),
        pa.field("validation_accuracy", pa.float64(), nullable=False),
    ]
)


class EmptyHistory(ValueError):
    pass


class MissingTrajectory(ValueError):
    pass


def _check_epochs(history: Sequence[EpochRecord]) -> None:
    if not history:
        raise EmptyHistory("no epochs to emit")
    epochs = [h.epoch for h in history]
    if epochs[0] != 1 or any(b <= a for a, b in zip(epochs, epochs[1:])):
        raise ValueError(f"epochs must start at 1 and increase, got {epochs[:5]}...")


def history_to_arrow(history: Sequence[EpochRecord]) -> pa.Table:
    _check_epochs(history)
    return pa.Table.from_pylist(
        [h.model_dump(exclude={"params"}) for h in history], schema=CURVE_SCHEMA
    )


def trajectory_schema(angle_count: int) -> pa.Schema:
    return pa.schema(
        [pa.field("epoch", pa.int64(), nullable=False)]
        + [pa.field(f"angle_{i:03d}", pa.float64(), nullable=False) for i in range(angle_count)]
        + [pa.field("bias", pa.float64(), nullable=False)]
    )


def trajectory_to_arrow(history: Sequence[EpochRecord]) -> pa.Table:
    _check_epochs(history)
    missing = [h.epoch for h in history if h.params is None]
    if missing:
        raise MissingTrajectory(f"epochs {missing[:5]} carry no parameters")
    angle_count = len(history[0].params.angles)
    if any(len(h.params.angles) != angle_count for h in history):
        raise ValueError("parameter count changes between epochs")
    schema = trajectory_schema(angle_count)
    rows = [[h.epoch, *h.params.angles, h.params.bias] for h in history]
    columns = [pa.array([r[i] for r in rows], type=f.type) for i, f in enumerate(schema)]
    return pa.Table.from_arrays(columns, schema=schema)


def emit_curves(history: Sequence[EpochRecord]) -> bytes:
    return plain_csv(history_to_arrow(history))


def emit_trajectory(history: Sequence[EpochRecord]) -> bytes:
    return plain_csv(trajectory_to_arrow(history))


def write_curves(history: Sequence[EpochRecord], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(emit_curves(history))
    return path


def write_trajectory(history: Sequence[EpochRecord], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(emit_trajectory(history))
    return path


def read_curves(path: str | Path) -> pa.Table:
    return pacsv.read_csv(
        str(path),
        convert_options=pacsv.ConvertOptions(column_types={f.name: f.type for f in CURVE_SCHEMA}),
    )


def read_trajectory(path: str | Path) -> pa.Table:
    return pacsv.read_csv(str(path))
