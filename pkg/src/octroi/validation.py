"""Input validation helpers shared by the estimators."""

from __future__ import annotations

import numpy as np


def check_image_stack(X, name: str = "X") -> np.ndarray:
    """Coerce to a (n, height, width) float-compatible array."""
    arr = np.asarray(X)
    if arr.ndim == 4 and arr.shape[1] == 1:
        arr = arr[:, 0]
    if arr.ndim != 3:
        raise ValueError(f"{name} must be a (n_samples, height, width) image stack, got shape {arr.shape}")
    if arr.shape[0] == 0:
        raise ValueError(f"{name} contains no samples")
    if not np.issubdtype(arr.dtype, np.number):
        raise ValueError(f"{name} must be numeric, got dtype {arr.dtype}")
    return arr


def check_binary_target(y, n_samples: int, name: str = "y") -> np.ndarray:
    arr = np.asarray(y)
    if arr.ndim != 1 or len(arr) != n_samples:
        raise ValueError(f"{name} must be 1-D with {n_samples} entries, got shape {arr.shape}")
    arr = arr.astype(np.int64)
    if not np.isin(arr, (0, 1)).all():
        raise ValueError(f"{name} must contain only 0 (control) and 1 (AMD)")
    return arr
