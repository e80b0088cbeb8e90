"""8-bit grayscale PNG read/write with atomic replacement."""

from __future__ import annotations

import io
import os
from pathlib import Path

import numpy as np
from PIL import Image


def write_png(path: str | Path, image: np.ndarray) -> Path:
    """Write a 2-D array as an 8-bit grayscale PNG (temp file + rename)."""
    path = Path(path)
    arr = np.asarray(image)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D image, got shape {arr.shape}")
    if arr.dtype != np.uint8:
        arr = np.clip(np.rint(arr), 0, 255).astype(np.uint8)
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = io.BytesIO()
    Image.fromarray(arr, mode="L").save(buf, format="PNG")
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(buf.getvalue())
    os.replace(tmp, path)
    return path


def read_png(path: str | Path) -> np.ndarray:
    """Read a grayscale PNG into a (height, width) uint8 array."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"scan file not found: {path}")
    with Image.open(path) as img:
        return np.asarray(img.convert("L"), dtype=np.uint8)
