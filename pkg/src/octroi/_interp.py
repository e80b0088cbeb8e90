"""Bilinear sampling shared by resizing and geometric augmentation."""

from __future__ import annotations

import numpy as np


def bilinear_lookup(image: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """Sample ``image`` at real-valued (row, col) positions.

    Neighbours outside the image contribute zero, so samples fade to 0 at
    the border instead of clamping to edge pixels.
    """
    img = np.asarray(image, dtype=np.float64)
    H, W = img.shape
    r0 = np.floor(rows).astype(np.int64)
    c0 = np.floor(cols).astype(np.int64)
    fr = rows - r0
    fc = cols - c0
    out = np.zeros(np.broadcast(rows, cols).shape, dtype=np.float64)
    for dr, dc, weight in (
        (0, 0, (1 - fr) * (1 - fc)),
        (0, 1, (1 - fr) * fc),
        (1, 0, fr * (1 - fc)),
        (1, 1, fr * fc),
    ):
        rr = r0 + dr
        cc = c0 + dc
        valid = (rr >= 0) & (rr < H) & (cc >= 0) & (cc < W)
        values = img[np.clip(rr, 0, H - 1), np.clip(cc, 0, W - 1)]
        out += np.where(valid, values, 0.0) * weight
    return out
