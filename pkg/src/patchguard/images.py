"""Image file decode/encode helpers (8-bit RGB arrays)."""

from __future__ import annotations

import numpy as np
from PIL import Image

from .errors import InputError, IoError


def load_image(path) -> np.ndarray:
    """Decode an image file to a (H, W, 3) uint8 RGB array."""
    try:
        with Image.open(path) as im:
            return np.asarray(im.convert("RGB"), dtype=np.uint8)
    except (OSError, ValueError) as e:
        raise InputError(f"cannot decode image {path}: {e}") from e


def save_image(arr: np.ndarray, path) -> None:
    """Write a (H, W, 3) uint8 RGB array as PNG."""
    try:
        Image.fromarray(np.asarray(arr, dtype=np.uint8), mode="RGB").save(path)
    except OSError as e:
        raise IoError(f"cannot write image {path}: {e}") from e
