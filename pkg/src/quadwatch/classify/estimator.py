"""scikit-learn facade over ToyNet."""

from __future__ import annotations

import logging

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.preprocessing import LabelEncoder
from sklearn.utils.multiclass import check_classification_targets
from sklearn.utils.validation import check_array, check_is_fitted

from .net import ToyNet, prepare_input, step_arrays

log = logging.getLogger(__name__)


def _as_images(X) -> np.ndarray:
    X = check_array(X, allow_nd=True, dtype=None, ensure_2d=False)
    if X.ndim == 2:
        raise ValueError("X must be a stack of 2-D images shaped (n_samples, height, width)")
    if X.ndim != 3:
        raise ValueError(f"expected (n_samples, height, width), got shape {X.shape}")
    return X


class ToyNetClassifier(ClassifierMixin, BaseEstimator):
    """Depthwise-separable ToyNet trained by mini-batch gradient descent.

    ``X`` is a stack of grayscale images with intensities in [0, 255]; images
    whose side differs from ``input_side`` are resampled bilinearly.
    """

    def __init__(self, input_side=32, in_channels=1, stem_width=8, widths=(16, 32, 64),
                 epochs=20, batch_size=16, learning_rate=0.05, seed=0, verbose=False):
        self.input_side = input_side
        self.in_channels = in_channels
        self.stem_width = stem_width
        self.widths = widths
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.seed = seed
        self.verbose = verbose

    def _prepare(self, X) -> np.ndarray:
        return prepare_input(list(_as_images(X)), self.input_side, self.in_channels)

    def fit(self, X, y):
        X = _as_images(X)
        check_classification_targets(y)
        enc = LabelEncoder().fit(y)
        self.classes_ = enc.classes_
        targets = enc.transform(y)
        self.net_ = ToyNet.build([str(c) for c in self.classes_], in_channels=self.in_channels,
                                 input_side=self.input_side, stem_width=self.stem_width,
                                 widths=tuple(self.widths), seed=self.seed)
        batch = prepare_input(list(X), self.input_side, self.in_channels)
        rng = np.random.default_rng(self.seed)
        self.loss_curve_ = []
        for epoch in range(self.epochs):
            order = rng.permutation(len(batch))
            losses = []
            for start in range(0, len(order), self.batch_size):
                idx = order[start : start + self.batch_size]
                losses.append(step_arrays(self.net_, batch[idx], targets[idx], self.learning_rate))
            self.loss_curve_.append(float(np.mean(losses)))
            if self.verbose:
                log.info("epoch %d loss %.4f", epoch + 1, self.loss_curve_[-1])
        self.n_iter_ = self.epochs
        return self

    @classmethod
    def from_net(cls, net: ToyNet) -> "ToyNetClassifier":
        """Wrap already-trained weights; ``classes_`` follows the net's class order."""
        clf = cls(input_side=net.input_side, in_channels=net.in_channels)
        clf.net_ = net
        clf.classes_ = np.array(net.class_names)
        return clf

    def predict_proba(self, X) -> np.ndarray:
        check_is_fitted(self, "net_")
        return self.net_.predict_proba(self._prepare(X))

    def predict(self, X) -> np.ndarray:
        proba = self.predict_proba(X)
        return self.classes_[proba.argmax(axis=1)]
