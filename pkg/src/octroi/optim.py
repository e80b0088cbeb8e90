"""Stochastic gradient descent with Nesterov momentum."""

from __future__ import annotations

import numpy as np


def sgd_nesterov_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    velocity: dict[str, np.ndarray],
    lr: float,
    momentum: float,
) -> tuple[dict[str, np.ndarray], dict[str, np.ndarray]]:
    """One Nesterov update, in place:  v <- m*v + g;  p <- p - lr*(g + m*v).

    With momentum 0 this reduces to plain SGD. Returns the updated
    (params, velocity) dicts for convenience.
    """
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape} for {name}")
        v = velocity[name]
        v *= momentum
        v += g
        p -= (lr * (g + momentum * v)).astype(p.dtype, copy=False)
    return params, velocity


def zero_velocity(params: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    return {name: np.zeros_like(p) for name, p in params.items()}
