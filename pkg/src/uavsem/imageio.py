"""8-bit PNG / binary PPM ingestion mapped linearly to [-1, 1]."""

from __future__ import annotations

from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image

IMAGE_SUFFIXES = (".png", ".ppm")


def to_unit(x: np.ndarray) -> np.ndarray:
    """[-1, 1] -> [0, 1]."""
    return (np.asarray(x, dtype=float) + 1.0) / 2.0


def from_uint8(a: np.ndarray) -> np.ndarray:
    return np.asarray(a, dtype=float) / 127.5 - 1.0


def to_uint8(x: np.ndarray) -> np.ndarray:
    return np.clip(np.rint((np.asarray(x) + 1.0) * 127.5), 0, 255).astype(np.uint8)


def center_crop(a: np.ndarray, size: int) -> np.ndarray:
    h, w = a.shape[:2]
    if h < size or w < size:
        raise ValueError(f"image {h}x{w} smaller than crop size {size}")
    top, left = (h - size) // 2, (w - size) // 2
    return a[top : top + size, left : left + size]


def load_image(path, size: Optional[int] = 256) -> np.ndarray:
    """Read an 8-bit RGB image as float in [-1, 1], centre-cropped to ``size``."""
    with Image.open(path) as im:
        a = np.asarray(im.convert("RGB"))
    if size is not None:
        a = center_crop(a, size)
    return from_uint8(a)


def save_image(x: np.ndarray, path) -> None:
    Image.fromarray(to_uint8(x)).save(path)


def bundled_corpus_dir() -> Path:
    return Path(str(resources.files("uavsem") / "data" / "corpus"))


def load_corpus(path=None, size: int = 256) -> list[tuple[str, np.ndarray]]:
    """All PNG/PPM images under ``path`` (default: the bundled corpus), sorted by name."""
    root = Path(path) if path is not None else bundled_corpus_dir()
    files = sorted(p for p in root.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    if not files:
        raise FileNotFoundError(f"no images in {root}")
    return [(p.stem, load_image(p, size)) for p in files]
