"""Regenerate the bundled 256x256 test corpus from scikit-image sample data."""

from pathlib import Path

import numpy as np
from PIL import Image
from skimage import data

NAMES = [
    "astronaut",
    "coffee",
    "chelsea",
    "rocket",
    "hubble_deep_field",
    "immunohistochemistry",
    "moon",
    "grass",
    "gravel",
    "brick",
]

OUT = Path(__file__).resolve().parents[1] / "src" / "uavsem" / "data" / "corpus"


def square_256(img: np.ndarray) -> Image.Image:
    if img.ndim == 2:
        img = np.stack([img] * 3, axis=-1)
    im = Image.fromarray(img[..., :3].astype(np.uint8))
    w, h = im.size
    s = min(w, h)
    left, top = (w - s) // 2, (h - s) // 2
    im = im.crop((left, top, left + s, top + s))
    return im.resize((256, 256), Image.Resampling.LANCZOS)


def main() -> None:
    OUT.mkdir(parents=True, exist_ok=True)
    for i, name in enumerate(NAMES):
        square_256(getattr(data, name)()).save(OUT / f"{i:02d}_{name}.png", optimize=True)


if __name__ == "__main__":
    main()
