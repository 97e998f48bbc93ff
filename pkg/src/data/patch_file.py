"""
Patch CSV format, read and written through PyArrow.

    f000,f001,...,f125,label
    0.5137254901960784,...,1

One row per patch, features as decimals in [0, 1], label 0 (healthy) or
1 (affected).  Arrow writes doubles in shortest round-trip form, so
write -> read reproduces every feature bitwise.

Pipeline:  PatchDataset  <-->  pa.Table  <-->  CSV file
"""
from __future__ import annotations

import io
from pathlib import Path

import numpy as np
import pyarrow as pa
import pyarrow.csv as pacsv

from .models import PATCH_FEATURES, DataError, Patch, PatchDataset, PatchLabel


class MalformedRow(DataError):
    pass


class MissingHeader(DataError):
    pass


FEATURE_COLUMNS: list[str] = [f"f{i:03d}" for i in range(PATCH_FEATURES)]
LABEL_COLUMN = "label"

PATCH_ARROW_SCHEMA = pa.schema(
    [pa.field(name, pa.float64(), nullable=False) for name in FEATURE_COLUMNS]
    + [pa.field(LABEL_COLUMN, pa.int64(), nullable=False)]
)


# ---------------------------------------------------------------------------
# Dataset <-> Arrow
# ---------------------------------------------------------------------------

def dataset_to_arrow(dataset: PatchDataset) -> pa.Table:
    features = np.array(
        [p.features for p in dataset.patches], dtype=np.float64
    ).reshape(len(dataset), PATCH_FEATURES)
    columns = [pa.array(features[:, i], type=pa.float64()) for i in range(PATCH_FEATURES)]
    columns.append(pa.array([p.label.to_file() for p in dataset.patches], type=pa.int64()))
    return pa.Table.from_arrays(columns, schema=PATCH_ARROW_SCHEMA)


def arrow_to_dataset(table: pa.Table, dataset_id: str = "patches") -> PatchDataset:
    if table.column_names != PATCH_ARROW_SCHEMA.names:
        raise MissingHeader(
            f"expected columns f000..f{PATCH_FEATURES - 1:03d},label, "
            f"got {len(table.column_names)} column(s) starting {table.column_names[:3]}"
        )
    if table.num_rows == 0:
        return PatchDataset(dataset_id=dataset_id, patches=[])

    features = np.column_stack(
        [table.column(name).to_numpy(zero_copy_only=False) for name in FEATURE_COLUMNS]
    ).astype(np.float64)
    labels = table.column(LABEL_COLUMN).to_numpy(zero_copy_only=False)

    patches = []
    for row in range(table.num_rows):
        values = features[row]
        if not np.all((values >= 0.0) & (values <= 1.0)):
            bad = int(np.flatnonzero(~((values >= 0.0) & (values <= 1.0)))[0])
            raise MalformedRow(f"row {row + 1}: feature f{bad:03d}={values[bad]!r} outside [0, 1]")
        try:
            label = PatchLabel.from_file(int(labels[row]))
        except ValueError as exc:
            raise MalformedRow(f"row {row + 1}: {exc}") from exc
        patches.append(Patch(features=values.tolist(), label=label))
    return PatchDataset(dataset_id=dataset_id, patches=patches)


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

def plain_csv(table: pa.Table) -> bytes:
    """CSV bytes with a bare header row and no quoting anywhere."""
    sink = io.BytesIO()
    sink.write((",".join(table.column_names) + "\n").encode("ascii"))
    pacsv.write_csv(
        table,
        sink,
        write_options=pacsv.WriteOptions(include_header=False, quoting_style="none"),
    )
    return sink.getvalue()


def patches_to_csv(dataset: PatchDataset) -> bytes:
    return plain_csv(dataset_to_arrow(dataset))


def write_patch_file(dataset: PatchDataset, path: str | Path) -> int:
    """
    Write *dataset* as a patch CSV at *path*.

    Returns the number of rows written.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(patches_to_csv(dataset))
    return len(dataset)


def patches_from_csv(data: bytes, dataset_id: str = "patches") -> PatchDataset:
    if not data.strip():
        raise MissingHeader("patch file is empty")
    try:
        header = data.split(b"\n", 1)[0].decode("utf-8").strip().replace('"', "")
    except UnicodeDecodeError as exc:
        raise MissingHeader(f"header is not UTF-8 text: {exc}") from exc
    if header.split(",") != PATCH_ARROW_SCHEMA.names:
        raise MissingHeader(f"bad header: {header[:40]!r}...")
    try:
        table = pacsv.read_csv(
            pa.BufferReader(data),
            convert_options=pacsv.ConvertOptions(
                column_types={f.name: f.type for f in PATCH_ARROW_SCHEMA}
            ),
        )
    except pa.ArrowInvalid as exc:
        raise MalformedRow(str(exc)) from exc
    return arrow_to_dataset(table, dataset_id)


def read_patch_file(path: str | Path) -> PatchDataset:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"patch file not found: {path}")
    return patches_from_csv(path.read_bytes(), dataset_id=path.stem)
