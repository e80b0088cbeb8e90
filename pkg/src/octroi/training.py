"""Training loop: minibatch SGD with Nesterov momentum and early stopping.

Validation loss is monitored every epoch; training stops once it has not
improved by at least ``min_improvement`` for ``patience`` consecutive
epochs, and the weights from the best-validation epoch are restored.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .augment import AugmentConfig, augment
from .network import MiniVgg, forward, loss_grad_probs
from .optim import sgd_nesterov_step, zero_velocity

_SHUFFLE_STREAM = 21
_AUGMENT_STREAM = 22


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    momentum: float = 0.9
    batch_size: int = 32
    max_epochs: int = 2500
    patience: int = 20
    min_improvement: float = 1e-9
    seed: int = 0
    augmentation: AugmentConfig = field(default_factory=AugmentConfig)

    def validate(self) -> None:
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if not (0.0 <= self.momentum < 1.0):
            raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be at least 1, got {self.batch_size}")
        if self.patience < 1:
            raise ValueError(f"patience must be at least 1, got {self.patience}")
        if self.max_epochs < 1:
            raise ValueError(f"max_epochs must be at least 1, got {self.max_epochs}")
        self.augmentation.validate()


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float
    train_acc: float
    val_acc: float


class EarlyStopper:
    """Patience counter over a validation-loss sequence."""

    def __init__(self, patience: int, min_improvement: float = 1e-9):
        self.patience = patience
        self.min_improvement = min_improvement
        self.best_loss = np.inf
        self.best_epoch = 0
        self.epochs_since_best = 0

    def update(self, epoch: int, val_loss: float) -> bool:
        """Record one epoch's validation loss; True means stop now."""
        if val_loss < self.best_loss - self.min_improvement:
            self.best_loss = val_loss
            self.best_epoch = epoch
            self.epochs_since_best = 0
        else:
            self.epochs_since_best += 1
        return self.epochs_since_best >= self.patience


def normalize_images(images: np.ndarray) -> np.ndarray:
    """Map 8-bit intensities to [0, 1] float32, shaped (n, 1, h, w)."""
    x = np.asarray(images, dtype=np.float32) / 255.0
    if x.ndim == 3:
        x = x[:, None, :, :]
    return x


def predict_probabilities(model: MiniVgg, images: np.ndarray, batch_size: int = 64) -> np.ndarray:
    """Batched inference on 8-bit image stacks."""
    x = normalize_images(images)
    probs = [forward(model, x[i : i + batch_size]) for i in range(0, len(x), batch_size)]
    return np.concatenate(probs) if probs else np.empty(0)


def _evaluate(model: MiniVgg, images: np.ndarray, labels: np.ndarray, batch_size: int) -> tuple[float, float]:
    p = predict_probabilities(model, images, batch_size)
    pc = np.clip(p, 1e-7, 1.0 - 1e-7)
    y = np.asarray(labels, dtype=np.float64)
    loss = float(np.mean(-(y * np.log(pc) + (1.0 - y) * np.log(1.0 - pc))))
    acc = float(np.mean((p >= 0.5) == (y == 1.0)))
    return loss, acc


def train(
    model: MiniVgg,
    train_set: tuple[np.ndarray, np.ndarray],
    val_set: tuple[np.ndarray, np.ndarray],
    config: TrainConfig,
) -> tuple[MiniVgg, list[EpochStats]]:
    """Fit the model, returning it with the best-validation-epoch weights.

    ``train_set``/``val_set`` are (images, labels) with 8-bit intensities;
    only training batches are augmented. Deterministic given ``config.seed``.
    """
    config.validate()
    x_train, y_train = train_set
    x_val, y_val = val_set
    if len(x_train) == 0 or len(x_val) == 0:
        raise ValueError("training and validation sets must be nonempty")
    y_train = np.asarray(y_train, dtype=np.float64)
    y_val = np.asarray(y_val, dtype=np.float64)

    shuffle_rng = np.random.default_rng([_SHUFFLE_STREAM, config.seed])
    aug_rng = np.random.default_rng([_AUGMENT_STREAM, config.seed])
    params = model.parameters()
    velocity = zero_velocity(params)
    stopper = EarlyStopper(config.patience, config.min_improvement)
    best_params = model.copy_parameters()
    history: list[EpochStats] = []

    for epoch in range(1, config.max_epochs + 1):
        perm = shuffle_rng.permutation(len(x_train))
        total_loss = 0.0
        total_correct = 0
        for start in range(0, len(perm), config.batch_size):
            idx = perm[start : start + config.batch_size]
            if config.augmentation.enabled:
                xb = np.stack([augment(x_train[i], config.augmentation, aug_rng) for i in idx])
            else:
                xb = x_train[idx]
            xb = normalize_images(xb)
            yb = y_train[idx]
            try:
                loss, grads, p = loss_grad_probs(model, xb, yb)
            except ValueError as exc:
                raise RuntimeError(f"training aborted at epoch {epoch}: {exc}") from exc
            sgd_nesterov_step(params, grads, velocity, config.learning_rate, config.momentum)
            total_loss += loss * len(idx)
            total_correct += int(np.sum((p >= 0.5) == (yb == 1.0)))

        train_loss = total_loss / len(perm)
        train_acc = total_correct / len(perm)
        val_loss, val_acc = _evaluate(model, x_val, y_val, config.batch_size)
        if not np.isfinite(val_loss):
            raise RuntimeError(f"training aborted at epoch {epoch}: non-finite validation loss")
        history.append(EpochStats(epoch, train_loss, val_loss, train_acc, val_acc))

        stop = stopper.update(epoch, val_loss)
        if stopper.best_epoch == epoch:
            best_params = model.copy_parameters()
        if stop:
            break

    model.load_parameters(best_params)
    return model, history


def write_history(history: list[EpochStats], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "val_loss", "train_acc", "val_acc"])
        for row in history:
            writer.writerow(
                [row.epoch, f"{row.train_loss:.8f}", f"{row.val_loss:.8f}", f"{row.train_acc:.6f}", f"{row.val_acc:.6f}"]
            )
    return path
