"""
Synthetic retinal patch generator.

Stands in for the licensed fundus datasets in tests and benchmarks:

  1. Healthy patch: a retina-toned background colour, jittered per patch,
     plus per-pixel Gaussian noise.
  2. Affected patch: the same kind of background with a bright 2x2 dot whose
     top-left pixel is the window center (column 3, row 2), which is where
     ``extract_patches`` puts a lesion centroid.
  3. Fundus fixture: a full background image with scattered 2x2 dots and the
     matching lesion mask, for exercising extraction end to end.

Output is fully determined by the seed.
"""
from __future__ import annotations

from typing import Iterator

import numpy as np

from .extraction import CENTER_COL, CENTER_ROW
from .models import (
    PATCH_CHANNELS,
    PATCH_HEIGHT,
    PATCH_WIDTH,
    LesionMask,
    Patch,
    PatchDataset,
    PatchLabel,
    RasterImage,
)

# ---------------------------------------------------------------------------
# Colour model
# ---------------------------------------------------------------------------

BACKGROUND_RGB = np.array([0.55, 0.27, 0.12])
BACKGROUND_JITTER = 0.04
PIXEL_NOISE = 0.02
DOT_RGB = np.array([0.95, 0.80, 0.55])
DOT_SIZE = 2


class PatchSynthesizer:
    """
    Deterministic synthetic patch source.

    Parameters
    ----------
    seed : int
        Random seed for reproducibility.
    """

    def __init__(self, seed: int = 42):
        self.seed = seed
        self.rng = np.random.default_rng(seed)

    # ------------------------------------------------------------------
    # Public API
    # ------------------------------------------------------------------

    def generate(self, per_class: int, dataset_id: str = "synthetic") -> PatchDataset:
        """Balanced pool of ``2 * per_class`` patches, classes alternating."""
        return PatchDataset(dataset_id=dataset_id, patches=list(self.stream(per_class)))

    def stream(self, per_class: int) -> Iterator[Patch]:
        for _ in range(per_class):
            yield self._make_patch(PatchLabel.HEALTHY)
            yield self._make_patch(PatchLabel.AFFECTED)

    def fundus(
        self, width: int = 64, height: int = 64, lesions: int = 3, image_id: str = "synthetic-fundus"
    ) -> tuple[RasterImage, LesionMask]:
        """Background image with *lesions* separated 2x2 dots and their mask."""
        canvas = self._background((height, width))
        flags = np.zeros((height, width), dtype=bool)
        placed = 0
        attempts = 0
        while placed < lesions:
            attempts += 1
            if attempts > 1000 * max(lesions, 1):
                raise ValueError(f"cannot place {lesions} separated lesions in {width}x{height}")
            y = int(self.rng.integers(1, height - DOT_SIZE - 1))
            x = int(self.rng.integers(1, width - DOT_SIZE - 1))
            # keep a one-pixel gap so every dot is its own component
            if flags[y - 1 : y + DOT_SIZE + 1, x - 1 : x + DOT_SIZE + 1].any():
                continue
            canvas[y : y + DOT_SIZE, x : x + DOT_SIZE] = self._dot()
            flags[y : y + DOT_SIZE, x : x + DOT_SIZE] = True
            placed += 1
        pixels = np.round(np.clip(canvas, 0.0, 1.0) * 255.0).astype(np.uint8)
        return RasterImage(pixels=pixels, image_id=image_id), LesionMask(flags=flags)

    # ------------------------------------------------------------------
    # Internal helpers
    # ------------------------------------------------------------------

    def _background(self, shape: tuple[int, int]) -> np.ndarray:
        base = BACKGROUND_RGB + self.rng.uniform(-BACKGROUND_JITTER, BACKGROUND_JITTER, 3)
        noise = self.rng.normal(0.0, PIXEL_NOISE, shape + (PATCH_CHANNELS,))
        return base + noise

    def _dot(self) -> np.ndarray:
        return DOT_RGB + self.rng.normal(0.0, PIXEL_NOISE, (DOT_SIZE, DOT_SIZE, PATCH_CHANNELS))

    def _make_patch(self, label: PatchLabel) -> Patch:
        window = self._background((PATCH_HEIGHT, PATCH_WIDTH))
        if label is PatchLabel.AFFECTED:
            window[
                CENTER_ROW : CENTER_ROW + DOT_SIZE, CENTER_COL : CENTER_COL + DOT_SIZE
            ] = self._dot()
        features = np.clip(window, 0.0, 1.0).reshape(-1)
        return Patch(features=features.tolist(), label=label)


def synthetic_pool(per_class: int, seed: int = 42) -> PatchDataset:
    """Convenience: ``PatchSynthesizer(seed).generate(per_class)``."""
    return PatchSynthesizer(seed).generate(per_class)
