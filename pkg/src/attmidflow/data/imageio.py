"""8-bit RGB image files (PPM, PNG or anything Pillow reads losslessly)."""

from __future__ import annotations

import numpy as np
from PIL import Image


def write_image(path, image) -> None:
    image = np.asarray(image)
    if image.dtype != np.uint8 or image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f"expected an H x W x 3 uint8 image, got {image.dtype} {image.shape}")
    Image.fromarray(image).save(path)


def read_image(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8).copy()
