"""Scikit-learn style wrapper around the VGG-style network and training loop."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import NotFittedError

from .augment import AugmentConfig
from .network import MiniVgg, ModelConfig
from .training import TrainConfig, predict_probabilities, train
from .validation import check_binary_target, check_image_stack

_VAL_SPLIT_STREAM = 31


class MiniVggClassifier(BaseEstimator, ClassifierMixin):
    """Binary image classifier with the fit/predict/predict_proba surface.

    ``fit(X, y)`` expects a (n, height, width) stack of 8-bit intensities
    and binary labels (1 = AMD). Pass ``X_val``/``y_val`` to control the
    early-stopping set; otherwise a stratified ``validation_fraction`` is
    carved from the training data.
    """

    def __init__(
        self,
        input_size: tuple[int, int] = (224, 224),
        block_channels: tuple[int, ...] = (8, 16, 32),
        convs_per_block: tuple[int, ...] = (2, 2, 3),
        dense_sizes: tuple[int, ...] = (64,),
        learning_rate: float = 1e-3,
        momentum: float = 0.9,
        batch_size: int = 32,
        max_epochs: int = 2500,
        patience: int = 20,
        seed: int = 0,
        augmentation: AugmentConfig | None = None,
        validation_fraction: float = 0.1,
    ):
        self.input_size = input_size
        self.block_channels = block_channels
        self.convs_per_block = convs_per_block
        self.dense_sizes = dense_sizes
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.seed = seed
        self.augmentation = augmentation
        self.validation_fraction = validation_fraction

    def _model_config(self) -> ModelConfig:
        return ModelConfig(
            input_size=tuple(self.input_size),
            block_channels=tuple(self.block_channels),
            convs_per_block=tuple(self.convs_per_block),
            dense_sizes=tuple(self.dense_sizes),
        )

    def _train_config(self) -> TrainConfig:
        augmentation = self.augmentation
        if augmentation is None:
            augmentation = AugmentConfig(enabled=False)
        return TrainConfig(
            learning_rate=self.learning_rate,
            momentum=self.momentum,
            batch_size=self.batch_size,
            max_epochs=self.max_epochs,
            patience=self.patience,
            seed=self.seed,
            augmentation=augmentation,
        )

    def _carve_validation(self, X: np.ndarray, y: np.ndarray):
        if not (0.0 < self.validation_fraction < 1.0):
            raise ValueError(
                f"validation_fraction must be in (0, 1), got {self.validation_fraction}"
            )
        rng = np.random.default_rng([_VAL_SPLIT_STREAM, self.seed])
        val_idx: list[int] = []
        for cls in (0, 1):
            members = np.flatnonzero(y == cls)
            if len(members) < 2:
                raise ValueError(f"need at least 2 samples of class {cls} to carve a validation set")
            k = max(1, round(len(members) * self.validation_fraction))
            val_idx.extend(members[rng.permutation(len(members))[:k]])
        val_mask = np.zeros(len(y), dtype=bool)
        val_mask[val_idx] = True
        return (X[~val_mask], y[~val_mask]), (X[val_mask], y[val_mask])

    def fit(self, X, y, X_val=None, y_val=None):
        X = check_image_stack(X)
        y = check_binary_target(y, len(X))
        if X.shape[1:] != tuple(self.input_size):
            raise ValueError(f"images of size {X.shape[1:]} do not match input_size {self.input_size}")
        if X_val is not None:
            X_val = check_image_stack(X_val, "X_val")
            y_val = check_binary_target(y_val, len(X_val), "y_val")
            train_set, val_set = (X, y), (X_val, y_val)
        else:
            train_set, val_set = self._carve_validation(X, y)
        model = MiniVgg(self._model_config(), seed=self.seed)
        model, history = train(model, train_set, val_set, self._train_config())
        self.network_ = model
        self.history_ = history
        self.classes_ = np.array([0, 1])
        self.n_features_in_ = int(np.prod(X.shape[1:]))
        return self

    def _check_fitted(self) -> MiniVgg:
        network = getattr(self, "network_", None)
        if network is None:
            raise NotFittedError("this MiniVggClassifier instance is not fitted yet")
        return network

    def predict_proba(self, X) -> np.ndarray:
        network = self._check_fitted()
        X = check_image_stack(X)
        p = predict_probabilities(network, X, batch_size=max(1, self.batch_size))
        return np.column_stack([1.0 - p, p])

    def predict(self, X) -> np.ndarray:
        return (self.predict_proba(X)[:, 1] >= 0.5).astype(np.int64)

    def score_probabilities(self, X) -> np.ndarray:
        """Positive-class probabilities, the raw material of every ScoreSet."""
        return self.predict_proba(X)[:, 1]
