"""Seeded training-time image augmentation.

Transforms are applied in a fixed order: rotation, horizontal flip,
brightness, shift, zoom. Each magnitude is sampled uniformly from its
configured range, so the output is fully determined by the RNG state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._interp import bilinear_lookup


@dataclass(frozen=True)
class AugmentConfig:
    rotation_degrees: tuple[float, float] = (0.0, 10.0)
    horizontal_flip: bool = True
    brightness_factor: tuple[float, float] = (0.4, 1.2)
    shift_fraction: float = 0.05
    zoom_factor: tuple[float, float] = (0.9, 1.2)
    enabled: bool = True

    def validate(self) -> None:
        for name in ("rotation_degrees", "brightness_factor", "zoom_factor"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name} range is empty: ({lo}, {hi})")
        if not (0.0 <= self.shift_fraction <= 0.5):
            raise ValueError(f"shift_fraction must be in [0, 0.5], got {self.shift_fraction}")


def rotate(image: np.ndarray, degrees: float) -> np.ndarray:
    """Rotate about the image center; vacated pixels are 0."""
    img = np.asarray(image, dtype=np.float64)
    H, W = img.shape
    theta = math.radians(degrees)
    cy, cx = (H - 1) / 2.0, (W - 1) / 2.0
    rows = np.arange(H, dtype=np.float64)[:, None] - cy
    cols = np.arange(W, dtype=np.float64)[None, :] - cx
    src_r = cy + rows * math.cos(theta) + cols * math.sin(theta)
    src_c = cx - rows * math.sin(theta) + cols * math.cos(theta)
    return bilinear_lookup(img, src_r, src_c)


def shift(image: np.ndarray, rows: int, cols: int) -> np.ndarray:
    """Translate by whole pixels; vacated pixels are exactly 0."""
    img = np.asarray(image, dtype=np.float64)
    H, W = img.shape
    out = np.zeros_like(img)
    if abs(rows) >= H or abs(cols) >= W:
        return out
    src_r = slice(max(0, -rows), min(H, H - rows))
    src_c = slice(max(0, -cols), min(W, W - cols))
    dst_r = slice(max(0, rows), min(H, H + rows))
    dst_c = slice(max(0, cols), min(W, W + cols))
    out[dst_r, dst_c] = img[src_r, src_c]
    return out


def zoom(image: np.ndarray, factor: float) -> np.ndarray:
    """Scale about the center; magnification crops, shrinking zero-pads."""
    if factor <= 0:
        raise ValueError(f"zoom factor must be positive, got {factor}")
    img = np.asarray(image, dtype=np.float64)
    H, W = img.shape
    cy, cx = (H - 1) / 2.0, (W - 1) / 2.0
    src_r = cy + (np.arange(H, dtype=np.float64)[:, None] - cy) / factor
    src_c = cx + (np.arange(W, dtype=np.float64)[None, :] - cx) / factor
    return bilinear_lookup(img, src_r, src_c)


def augment(image: np.ndarray, config: AugmentConfig, rng: np.random.Generator) -> np.ndarray:
    """Apply the configured transform chain to one image.

    Disabled configs return the input unchanged. The rotation angle's sign
    is drawn at random; its magnitude comes from ``rotation_degrees``.
    """
    config.validate()
    if not config.enabled:
        return image
    img = np.asarray(image, dtype=np.float64)
    H, W = img.shape

    magnitude = rng.uniform(*config.rotation_degrees)
    angle = magnitude if rng.random() < 0.5 else -magnitude
    if angle != 0.0:
        img = rotate(img, angle)

    if config.horizontal_flip and rng.random() < 0.5:
        img = img[:, ::-1]

    img = np.clip(img * rng.uniform(*config.brightness_factor), 0.0, 255.0)

    if config.shift_fraction > 0:
        dr = round(rng.uniform(-config.shift_fraction, config.shift_fraction) * H)
        dc = round(rng.uniform(-config.shift_fraction, config.shift_fraction) * W)
        if dr or dc:
            img = shift(img, dr, dc)

    factor = rng.uniform(*config.zoom_factor)
    if factor != 1.0:
        img = zoom(img, factor)

    return img.astype(np.float32)
