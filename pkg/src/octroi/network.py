"""A small VGG-style convolutional network with from-scratch forward/backward.

All convolutions are 3x3, stride 1, padding 1; every block ends in a 2x2
max-pool. The head is a stack of dense+ReLU layers and a single-logit
output whose sigmoid is the AMD probability. Arrays are float32 by default;
float64 is supported for finite-difference gradient checking.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .types import atomic_write_bytes, atomic_write_text

_INIT_STREAM = 11
_CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    input_size: tuple[int, int] = (224, 224)
    block_channels: tuple[int, ...] = (8, 16, 32)
    convs_per_block: tuple[int, ...] = (2, 2, 3)
    dense_sizes: tuple[int, ...] = (64,)

    def validate(self) -> None:
        if len(self.block_channels) != len(self.convs_per_block):
            raise ValueError(
                "block_channels and convs_per_block must have the same length, got "
                f"{len(self.block_channels)} and {len(self.convs_per_block)}"
            )
        if not self.block_channels:
            raise ValueError("at least one convolutional block is required")
        if any(c < 1 for c in self.block_channels) or any(r < 1 for r in self.convs_per_block):
            raise ValueError("block widths and conv counts must be at least 1")
        if any(d < 1 for d in self.dense_sizes):
            raise ValueError("dense layer sizes must be at least 1")
        if min(self.input_size) < 1:
            raise ValueError(f"input_size must be positive, got {self.input_size}")


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _im2col3x3(x: np.ndarray) -> np.ndarray:
    # x is channels-last (n, h, w, c); rows ordered (c, i, j) to match the
    # flattened (in_ch, 3, 3) weight layout.
    n, h, w, c = x.shape
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    win = sliding_window_view(xp, (3, 3), axis=(1, 2))  # (n, h, w, c, 3, 3)
    return win.reshape(n * h * w, c * 9)


class Conv2D:
    """3x3 convolution, stride 1, padding 1, on channels-last activations.

    ``needs_input_grad`` can be cleared on the first layer to skip the
    unused image-gradient computation.
    """

    def __init__(self, name: str, in_ch: int, out_ch: int, rng: np.random.Generator, dtype):
        self.name = name
        std = np.sqrt(2.0 / (in_ch * 9))
        self.W = rng.normal(0.0, std, size=(out_ch, in_ch, 3, 3)).astype(dtype)
        self.b = np.zeros(out_ch, dtype=dtype)
        self.gW = np.zeros_like(self.W)
        self.gb = np.zeros_like(self.b)
        self.needs_input_grad = True
        self._cache = None

    def params(self):
        return {f"{self.name}.W": self.W, f"{self.name}.b": self.b}

    def grads(self):
        return {f"{self.name}.W": self.gW, f"{self.name}.b": self.gb}

    def _weight_matrix(self) -> np.ndarray:
        # (in_ch * 9, out_ch) with rows in (c, i, j) order
        out_ch = self.W.shape[0]
        return self.W.reshape(out_ch, -1).T

    def forward(self, x: np.ndarray) -> np.ndarray:
        n, h, w, c = x.shape
        cols = _im2col3x3(x)
        out = cols @ self._weight_matrix() + self.b
        self._cache = (cols, (n, h, w, c))
        return out.reshape(n, h, w, -1)

    def backward(self, g: np.ndarray) -> np.ndarray:
        cols, (n, h, w, c) = self._cache
        out_ch = self.W.shape[0]
        gmat = np.ascontiguousarray(g).reshape(-1, out_ch)
        self.gW = (gmat.T @ cols).reshape(self.W.shape)
        self.gb = gmat.sum(axis=0)
        if not self.needs_input_grad:
            return np.zeros((n, h, w, c), dtype=g.dtype)
        gcols = gmat @ self._weight_matrix().T
        g6 = gcols.reshape(n, h, w, c, 3, 3)
        gxp = np.zeros((n, h + 2, w + 2, c), dtype=g.dtype)
        for i in range(3):
            for j in range(3):
                gxp[:, i : i + h, j : j + w, :] += g6[..., i, j]
        return gxp[:, 1 : h + 1, 1 : w + 1, :]


class ReLU:
    def __init__(self):
        self._mask = None

    def params(self):
        return {}

    def grads(self):
        return {}

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._mask = x > 0
        return np.where(self._mask, x, 0)

    def backward(self, g: np.ndarray) -> np.ndarray:
        return np.where(self._mask, g, 0)


class MaxPool2x2:
    """2x2 max-pool, stride 2; odd trailing rows/cols are dropped.

    Gradient flows to the first maximum (row-major window order) on ties.
    """

    def __init__(self):
        self._cache = None

    def params(self):
        return {}

    def grads(self):
        return {}

    @staticmethod
    def _quadrants(x: np.ndarray, h2: int, w2: int):
        return (
            x[:, 0 : h2 * 2 : 2, 0 : w2 * 2 : 2, :],
            x[:, 0 : h2 * 2 : 2, 1 : w2 * 2 : 2, :],
            x[:, 1 : h2 * 2 : 2, 0 : w2 * 2 : 2, :],
            x[:, 1 : h2 * 2 : 2, 1 : w2 * 2 : 2, :],
        )

    def forward(self, x: np.ndarray) -> np.ndarray:
        n, h, w, c = x.shape
        h2, w2 = h // 2, w // 2
        a, b, cq, d = self._quadrants(x, h2, w2)
        out = np.maximum(np.maximum(a, b), np.maximum(cq, d))
        self._cache = (x, out, (n, h, w, c))
        return out

    def backward(self, g: np.ndarray) -> np.ndarray:
        x, out, (n, h, w, c) = self._cache
        h2, w2 = h // 2, w // 2
        gx = np.zeros((n, h, w, c), dtype=g.dtype)
        taken = np.zeros(out.shape, dtype=bool)
        for quadrant, gq in zip(self._quadrants(x, h2, w2), self._quadrants(gx, h2, w2)):
            mask = (quadrant == out) & ~taken
            gq += g * mask
            taken |= mask
        return gx


class Flatten:
    def __init__(self):
        self._shape = None

    def params(self):
        return {}

    def grads(self):
        return {}

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, g: np.ndarray) -> np.ndarray:
        return g.reshape(self._shape)


class Dense:
    def __init__(self, name: str, in_dim: int, out_dim: int, rng: np.random.Generator, dtype, scale: float = 2.0):
        self.name = name
        std = np.sqrt(scale / in_dim)
        self.W = rng.normal(0.0, std, size=(in_dim, out_dim)).astype(dtype)
        self.b = np.zeros(out_dim, dtype=dtype)
        self.gW = np.zeros_like(self.W)
        self.gb = np.zeros_like(self.b)
        self._x = None

    def params(self):
        return {f"{self.name}.W": self.W, f"{self.name}.b": self.b}

    def grads(self):
        return {f"{self.name}.W": self.gW, f"{self.name}.b": self.gb}

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._x = x
        return x @ self.W + self.b

    def backward(self, g: np.ndarray) -> np.ndarray:
        self.gW = self._x.T @ g
        self.gb = g.sum(axis=0)
        return g @ self.W.T


class MiniVgg:
    """The network object: a layer stack built from a ModelConfig."""

    def __init__(self, config: ModelConfig, seed: int = 0, dtype=np.float32):
        config.validate()
        self.config = config
        self.seed = seed
        self.dtype = np.dtype(dtype).type
        rng = np.random.default_rng([_INIT_STREAM, seed])
        h, w = config.input_size
        in_ch = 1
        self.layers: list = []
        for bi, (ch, reps) in enumerate(zip(config.block_channels, config.convs_per_block)):
            for ci in range(reps):
                self.layers.append(Conv2D(f"block{bi}.conv{ci}", in_ch, ch, rng, self.dtype))
                self.layers.append(ReLU())
                in_ch = ch
            self.layers.append(MaxPool2x2())
            h, w = h // 2, w // 2
            if h < 1 or w < 1:
                raise ValueError(
                    f"input {config.input_size} is too small for {len(config.block_channels)} pooling blocks"
                )
        self.layers[0].needs_input_grad = False  # image gradients are never used
        self.layers.append(Flatten())
        feat = in_ch * h * w
        for di, size in enumerate(config.dense_sizes):
            self.layers.append(Dense(f"dense{di}", feat, size, rng, self.dtype))
            self.layers.append(ReLU())
            feat = size
        self.layers.append(Dense("output", feat, 1, rng, self.dtype, scale=1.0))

    def parameters(self) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        for layer in self.layers:
            out.update(layer.params())
        return out

    def gradients(self) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        for layer in self.layers:
            out.update(layer.grads())
        return out

    def copy_parameters(self) -> dict[str, np.ndarray]:
        return {name: arr.copy() for name, arr in self.parameters().items()}

    def load_parameters(self, params: dict[str, np.ndarray]) -> None:
        own = self.parameters()
        if set(own) != set(params):
            missing = sorted(set(own) ^ set(params))
            raise ValueError(f"parameter names do not match the architecture: {missing}")
        for name, arr in own.items():
            new = np.asarray(params[name], dtype=arr.dtype)
            if new.shape != arr.shape:
                raise ValueError(f"parameter {name}: shape {new.shape} != expected {arr.shape}")
            arr[...] = new

    def _check_batch(self, batch: np.ndarray) -> np.ndarray:
        x = np.asarray(batch)
        if x.ndim == 4 and x.shape[1] == 1:  # tolerate an explicit channel axis
            x = x[:, 0]
        if x.ndim != 3:
            raise ValueError(f"expected a (batch, height, width) stack, got shape {np.shape(batch)}")
        if x.shape[1:] != tuple(self.config.input_size):
            raise ValueError(
                f"expected input size {tuple(self.config.input_size)}, got {x.shape[1:]}"
            )
        return x.astype(self.dtype, copy=False)[..., None]  # channels-last

    def forward_logits(self, batch: np.ndarray) -> np.ndarray:
        x = self._check_batch(batch)
        for layer in self.layers:
            x = layer.forward(x)
        return x[:, 0]

    def backward_logits(self, dlogits: np.ndarray) -> None:
        g = np.asarray(dlogits, dtype=self.dtype)[:, None]
        for layer in reversed(self.layers):
            g = layer.backward(g)


def forward(model: MiniVgg, batch: np.ndarray) -> np.ndarray:
    """Per-sample AMD probability: sigmoid of the final scalar logit."""
    return _sigmoid(model.forward_logits(batch))


def loss_grad_probs(
    model: MiniVgg, batch: np.ndarray, labels: np.ndarray
) -> tuple[float, dict[str, np.ndarray], np.ndarray]:
    """BCE loss, parameter gradients and the batch probabilities in one pass."""
    y = np.asarray(labels, dtype=np.float64)
    if y.ndim != 1 or len(y) != len(batch):
        raise ValueError(f"labels must be one per sample, got {y.shape} for batch of {len(batch)}")
    if not np.isin(y, (0.0, 1.0)).all():
        raise ValueError("labels must be 0 or 1")
    logits = model.forward_logits(batch)
    p = _sigmoid(logits)
    pc = np.clip(p, 1e-7, 1.0 - 1e-7)
    loss = float(np.mean(-(y * np.log(pc) + (1.0 - y) * np.log(1.0 - pc))))
    if not np.isfinite(loss):
        raise ValueError(f"non-finite loss: {loss}")
    model.backward_logits((p - y) / len(y))
    return loss, model.gradients(), p


def loss_and_grad(
    model: MiniVgg, batch: np.ndarray, labels: np.ndarray
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean binary cross-entropy and gradients for every trainable parameter."""
    loss, grads, _ = loss_grad_probs(model, batch, labels)
    return loss, grads


def save_checkpoint(model: MiniVgg, directory: str | Path) -> Path:
    """Write ``model.json`` (architecture header) and ``model.bin`` (<f4 blob)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    params = model.parameters()
    header = {
        "format_version": _CHECKPOINT_VERSION,
        "model": {
            "input_size": list(model.config.input_size),
            "block_channels": list(model.config.block_channels),
            "convs_per_block": list(model.config.convs_per_block),
            "dense_sizes": list(model.config.dense_sizes),
        },
        "seed": model.seed,
        "dtype": "<f4",
        "params": [{"name": name, "shape": list(arr.shape)} for name, arr in params.items()],
    }
    atomic_write_text(directory / "model.json", json.dumps(header, indent=2) + "\n")
    blob = b"".join(np.ascontiguousarray(arr, dtype="<f4").tobytes() for arr in params.values())
    atomic_write_bytes(directory / "model.bin", blob)
    return directory


def load_checkpoint(directory: str | Path) -> MiniVgg:
    """Restore a model bit-exactly from ``model.json`` + ``model.bin``."""
    directory = Path(directory)
    with open(directory / "model.json", "r", encoding="utf-8") as fh:
        header = json.load(fh)
    version = header.get("format_version")
    if version != _CHECKPOINT_VERSION:
        raise ValueError(f"format_version: unsupported checkpoint version {version!r}")
    if header.get("dtype") != "<f4":
        raise ValueError(f"dtype: unsupported weight dtype {header.get('dtype')!r}")
    m = header["model"]
    config = ModelConfig(
        input_size=tuple(m["input_size"]),
        block_channels=tuple(m["block_channels"]),
        convs_per_block=tuple(m["convs_per_block"]),
        dense_sizes=tuple(m["dense_sizes"]),
    )
    model = MiniVgg(config, seed=int(header.get("seed", 0)), dtype=np.float32)
    expected = model.parameters()
    listed = header["params"]
    if [p["name"] for p in listed] != list(expected):
        raise ValueError("params: checkpoint parameter list does not match the architecture")
    blob = (directory / "model.bin").read_bytes()
    offset = 0
    loaded: dict[str, np.ndarray] = {}
    for p in listed:
        name, shape = p["name"], tuple(p["shape"])
        if shape != expected[name].shape:
            raise ValueError(f"parameter {name}: shape {shape} != expected {expected[name].shape}")
        nbytes = int(np.prod(shape)) * 4
        if offset + nbytes > len(blob):
            raise ValueError(
                f"parameter {name}: model.bin truncated (need {offset + nbytes} bytes, have {len(blob)})"
            )
        loaded[name] = np.frombuffer(blob, dtype="<f4", count=int(np.prod(shape)), offset=offset).reshape(shape)
        offset += nbytes
    if offset != len(blob):
        raise ValueError(f"model.bin has {len(blob) - offset} trailing bytes")
    model.load_parameters(loaded)
    return model
