"""
Raster ingestion: binary P6 pixmaps for images, P5 graymaps for lesion
masks (nonzero = lesion), plus headerless raw RGB bytes for converters that
emit nothing else.  Anything fancier is converted outside this package.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .models import DataError, LesionMask, RasterImage


def load_image(path: str | Path, image_id: str | None = None) -> RasterImage:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"image not found: {path}")
    with Image.open(path) as img:
        if img.mode != "RGB":
            raise DataError(f"{path}: expected an RGB pixmap, got mode {img.mode}")
        pixels = np.asarray(img, dtype=np.uint8).copy()
    return RasterImage(pixels=pixels, image_id=image_id or path.stem)


def load_mask(path: str | Path) -> LesionMask:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"mask not found: {path}")
    with Image.open(path) as img:
        if img.mode not in ("L", "1"):
            raise DataError(f"{path}: expected a graymap, got mode {img.mode}")
        flags = np.asarray(img) != 0
    return LesionMask(flags=flags)


def load_raw_rgb(path: str | Path, width: int, height: int, image_id: str | None = None) -> RasterImage:
    """Headerless interleaved RGB bytes, row-major, *width* x *height*."""
    path = Path(path)
    data = np.fromfile(path, dtype=np.uint8)
    if data.size != width * height * 3:
        raise DataError(
            f"{path}: {data.size} bytes do not match {width}x{height} RGB"
        )
    return RasterImage(pixels=data.reshape(height, width, 3), image_id=image_id or path.stem)


def save_image(image: RasterImage, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.ascontiguousarray(image.pixels, dtype=np.uint8)).save(path, format="PPM")
    return path


def save_mask(mask: LesionMask, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(mask.flags.astype(np.uint8) * 255).save(path, format="PPM")
    return path
