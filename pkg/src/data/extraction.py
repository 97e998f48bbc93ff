"""
Patch extraction from an annotated fundus image.

Affected patches: one 7x6 window per lesion connected component
(8-connectivity), placed so the window's center pixel (column 3, row 2)
sits on the floor of the component centroid, then clamped into the image.
When that pixel is not part of the component (ring or crescent shapes), the
nearest component pixel to the centroid is used instead.
Healthy patches: windows drawn uniformly by seed among all windows with no
lesion pixel.  Pixel values are scaled to [0, 1].
"""
from __future__ import annotations

import logging

import numpy as np
from skimage.measure import label, regionprops
from skimage.util import view_as_windows

from .models import (
    PATCH_HEIGHT,
    PATCH_WIDTH,
    DataError,
    LesionMask,
    Patch,
    PatchDataset,
    PatchLabel,
    Provenance,
    RasterImage,
)

logger = logging.getLogger(__name__)

CENTER_COL = (PATCH_WIDTH - 1) // 2
CENTER_ROW = (PATCH_HEIGHT - 1) // 2


class DimensionMismatch(DataError):
    pass


class InsufficientLesions(DataError):
    pass


class InsufficientHealthyArea(DataError):
    pass


def _window(image: RasterImage, x: int, y: int, label_: PatchLabel) -> Patch:
    block = image.pixels[y : y + PATCH_HEIGHT, x : x + PATCH_WIDTH, :]
    features = (block.astype(np.float64) / 255.0).reshape(-1)
    return Patch(
        features=features.tolist(),
        label=label_,
        provenance=Provenance(image_id=image.image_id, x=x, y=y),
    )


def _component_center(region) -> tuple[int, int]:
    """(row, col) of the floored centroid, snapped onto the component."""
    cy, cx = region.centroid
    row, col = int(np.floor(cy)), int(np.floor(cx))
    coords = region.coords
    if np.any((coords[:, 0] == row) & (coords[:, 1] == col)):
        return row, col
    distances = (coords[:, 0] - cy) ** 2 + (coords[:, 1] - cx) ** 2
    nearest = coords[int(np.argmin(distances))]
    return int(nearest[0]), int(nearest[1])


def lesion_windows(mask: LesionMask) -> list[tuple[int, int]]:
    """Top-left (x, y) of the window centered on each lesion component."""
    components = label(mask.flags.astype(np.uint8), connectivity=2)
    corners = []
    for region in regionprops(components):
        row, col = _component_center(region)
        x = col - CENTER_COL
        y = row - CENTER_ROW
        x = min(max(x, 0), mask.width - PATCH_WIDTH)
        y = min(max(y, 0), mask.height - PATCH_HEIGHT)
        corners.append((x, y))
    return corners


def healthy_windows(mask: LesionMask) -> np.ndarray:
    """(k, 2) array of (x, y) corners whose window has no lesion pixel."""
    hits = view_as_windows(mask.flags.astype(np.uint8), (PATCH_HEIGHT, PATCH_WIDTH))
    clean = hits.sum(axis=(2, 3)) == 0
    ys, xs = np.nonzero(clean)
    return np.stack([xs, ys], axis=1)


def extract_patches(
    image: RasterImage, mask: LesionMask, per_class: int, rng_seed: int
) -> PatchDataset:
    """Exactly *per_class* affected and *per_class* healthy patches."""
    if per_class < 1:
        raise ValueError(f"per_class must be positive, got {per_class}")
    if (image.height, image.width) != (mask.height, mask.width):
        raise DimensionMismatch(
            f"image is {image.width}x{image.height}, mask is {mask.width}x{mask.height}"
        )
    if image.width < PATCH_WIDTH or image.height < PATCH_HEIGHT:
        raise DimensionMismatch(
            f"image {image.width}x{image.height} is smaller than a "
            f"{PATCH_WIDTH}x{PATCH_HEIGHT} window"
        )

    rng = np.random.default_rng(rng_seed)

    corners = lesion_windows(mask)
    if len(corners) < per_class:
        raise InsufficientLesions(
            f"{image.image_id}: {len(corners)} lesion component(s), need {per_class}"
        )
    if len(corners) > per_class:
        keep = np.sort(rng.choice(len(corners), size=per_class, replace=False))
        corners = [corners[i] for i in keep]

    candidates = healthy_windows(mask)
    if candidates.shape[0] < per_class:
        raise InsufficientHealthyArea(
            f"{image.image_id}: {candidates.shape[0]} lesion-free window(s), need {per_class}"
        )
    picks = np.sort(rng.choice(candidates.shape[0], size=per_class, replace=False))

    patches = [_window(image, x, y, PatchLabel.AFFECTED) for x, y in corners]
    patches += [
        _window(image, int(candidates[i, 0]), int(candidates[i, 1]), PatchLabel.HEALTHY)
        for i in picks
    ]
    logger.info(
        "Extracted %d affected + %d healthy patches from %s",
        per_class, per_class, image.image_id,
    )
    return PatchDataset(dataset_id=image.image_id, patches=patches)
