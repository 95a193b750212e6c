"""Standardizer, bottleneck autoencoder and window-M LSTM next-step predictor.

All three follow the scikit-learn estimator protocol (``fit`` returns self,
hyperparameters live in ``__init__`` and are exposed through
``get_params``; fitted state carries a trailing underscore).
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .errors import InsufficientData, ShapeMismatch, WrongWindowLength
from .nn import (
    AdamState,
    DenseLayer,
    LSTMCell,
    adam_step,
    dense_backward,
    dense_forward,
    lstm_backward_through_time,
    lstm_forward,
    mse_loss,
)
from .telemetry import N_FEATURES

logger = logging.getLogger(__name__)

STD_FLOOR = 1e-6
MIN_AE_SAMPLES = 32
MIN_LSTM_PAIRS = 32


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    lr: float = 1e-3
    seed: int = 0
    shuffle: bool = True
    batch_size: int = 16

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        # lr == 0 is allowed: it freezes the initial weights
        if self.lr < 0:
            raise ValueError(f"lr must be >= 0, got {self.lr}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")


def euclidean_distance(a, b):
    """Euclidean distance along the last axis (rows are compared pairwise)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatch(f"cannot compare shapes {a.shape} and {b.shape}")
    d = np.sqrt(np.sum((a - b) ** 2, axis=-1))
    return float(d) if d.ndim == 0 else d


def _as_matrix(X, n_features=N_FEATURES):
    if hasattr(X, "features_array"):
        X = X.features_array()
    elif isinstance(X, (list, tuple)) and X and hasattr(X[0], "as_array"):
        X = np.stack([v.as_array() for v in X])
    X = check_array(X, dtype=np.float64, ensure_min_samples=0)
    if X.shape[1] != n_features:
        raise ShapeMismatch(f"expected {n_features} features, got {X.shape[1]}")
    return X


def _batches(n: int, batch_size: int, rng: np.random.Generator, shuffle: bool):
    order = rng.permutation(n) if shuffle else np.arange(n)
    for start in range(0, n, batch_size):
        yield order[start : start + batch_size]


class Standardizer(TransformerMixin, BaseEstimator):
    """Per-feature z-scoring with population statistics.

    Standard deviations below ``std_floor`` are raised to it, so a constant
    feature maps to 0 instead of dividing by zero.
    """

    def __init__(self, std_floor: float = STD_FLOOR):
        self.std_floor = std_floor

    def fit(self, X, y=None):
        X = _as_matrix(X)
        if len(X) < 2:
            raise InsufficientData(f"need at least 2 samples to standardize, got {len(X)}")
        self.means_ = X.mean(axis=0)
        self.stds_ = np.maximum(X.std(axis=0), self.std_floor)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "means_")
        X = np.asarray(X, dtype=np.float64)
        return (X - self.means_) / self.stds_

    def inverse_transform(self, Z):
        check_is_fitted(self, "means_")
        return np.asarray(Z, dtype=np.float64) * self.stds_ + self.means_

    @classmethod
    def from_moments(cls, means, stds, std_floor: float = STD_FLOOR) -> "Standardizer":
        s = cls(std_floor=std_floor)
        s.means_ = np.asarray(means, dtype=np.float64).copy()
        s.stds_ = np.asarray(stds, dtype=np.float64).copy()
        if s.means_.shape != s.stds_.shape:
            raise ShapeMismatch("means and stds must have the same length")
        if np.any(s.stds_ < std_floor):
            raise ValueError(f"every std must be >= {std_floor}")
        s.n_features_in_ = len(s.means_)
        return s


def fit_standardizer(samples) -> Standardizer:
    return Standardizer().fit(samples)


def standardize(s: Standardizer, x) -> np.ndarray:
    if hasattr(x, "as_array"):
        x = x.as_array()
    return s.transform(x)


def destandardize(s: Standardizer, z) -> np.ndarray:
    return s.inverse_transform(z)


class Autoencoder(TransformerMixin, BaseEstimator):
    """6 -> hidden -> 1 -> hidden -> 6 reconstruction network.

    ``transform`` gives the 1-d bottleneck code, ``inverse_transform`` decodes
    a code, ``predict`` reconstructs and ``score_samples`` returns the
    Euclidean reconstruction distance of each row.
    """

    def __init__(self, hidden_width=3, epochs=50, lr=1e-3, seed=0, shuffle=True, batch_size=16):
        self.hidden_width = hidden_width
        self.epochs = epochs
        self.lr = lr
        self.seed = seed
        self.shuffle = shuffle
        self.batch_size = batch_size

    def init_layers(self, rng=None) -> list[DenseLayer]:
        rng = np.random.default_rng(self.seed) if rng is None else rng
        w = self.hidden_width
        return [
            DenseLayer.init(N_FEATURES, w, "tanh", rng),
            DenseLayer.init(w, 1, "tanh", rng),
            DenseLayer.init(1, w, "tanh", rng),
            DenseLayer.init(w, N_FEATURES, "identity", rng),
        ]

    def fit(self, X, y=None):
        cfg = TrainConfig(self.epochs, self.lr, self.seed, self.shuffle, self.batch_size)
        Z = _as_matrix(X)
        if len(Z) < MIN_AE_SAMPLES:
            raise InsufficientData(f"autoencoder needs >= {MIN_AE_SAMPLES} samples, got {len(Z)}")
        rng = np.random.default_rng(cfg.seed)
        layers = self.init_layers(rng)
        params = [p for layer in layers for p in layer.params()]
        opt = AdamState.for_params(params, lr=cfg.lr)

        curve = []
        for _ in range(cfg.epochs):
            total = 0.0
            for idx in _batches(len(Z), cfg.batch_size, rng, cfg.shuffle):
                batch = Z[idx]
                out, caches = _forward_layers(layers, batch)
                loss, d = mse_loss(out, batch)
                total += loss * len(idx)
                grads = []
                for layer, cache in zip(reversed(layers), reversed(caches)):
                    d, dW, db = dense_backward(layer, cache, d)
                    grads[:0] = [dW, db]
                adam_step(params, grads, opt)
            curve.append(total / len(Z))
        self.layers_ = layers
        self.loss_curve_ = curve
        logger.debug("autoencoder loss %.6g -> %.6g", curve[0], curve[-1])
        return self

    @classmethod
    def from_layers(cls, layers, **params) -> "Autoencoder":
        if len(layers) != 4:
            raise ShapeMismatch(f"autoencoder has exactly 4 layers, got {len(layers)}")
        widths = [layers[0].n_in] + [layer.n_out for layer in layers]
        if widths[0] != N_FEATURES or widths[-1] != N_FEATURES or widths[2] != 1:
            raise ShapeMismatch(f"layer widths {widths} are not 6 -> h -> 1 -> h -> 6")
        for a, b in zip(layers, layers[1:]):
            if a.n_out != b.n_in:
                raise ShapeMismatch(f"layer widths {widths} do not chain")
        model = cls(hidden_width=layers[0].n_out, **params)
        model.layers_ = list(layers)
        return model

    def transform(self, Z):
        check_is_fitted(self, "layers_")
        out, _ = _forward_layers(self.layers_[:2], np.asarray(Z, dtype=np.float64))
        return out

    def inverse_transform(self, codes):
        check_is_fitted(self, "layers_")
        out, _ = _forward_layers(self.layers_[2:], np.asarray(codes, dtype=np.float64))
        return out

    def predict(self, Z):
        check_is_fitted(self, "layers_")
        out, _ = _forward_layers(self.layers_, np.asarray(Z, dtype=np.float64))
        return out

    def score_samples(self, Z):
        Z = np.asarray(Z, dtype=np.float64)
        return euclidean_distance(Z, self.predict(Z))


def _forward_layers(layers, x):
    caches = []
    for layer in layers:
        x, cache = dense_forward(layer, x)
        caches.append(cache)
    return x, caches


def ae_forward(model: Autoencoder, z) -> np.ndarray:
    return model.predict(z)


def train_autoencoder(samples, cfg: TrainConfig = TrainConfig()) -> Autoencoder:
    return Autoencoder(**asdict(cfg)).fit(samples)


class LSTMPredictor(RegressorMixin, BaseEstimator):
    """Forecast the next standardized sample from the previous ``window``.

    ``fit`` takes one standardized sequence of shape (T, 6), or a list of
    them, and trains on every stride-1 (window, next sample) pair. ``predict`` takes windows of
    shape (n, window, 6).
    """

    def __init__(self, window=20, hidden_size=32, epochs=50, lr=1e-3, seed=0, shuffle=True, batch_size=16):
        self.window = window
        self.hidden_size = hidden_size
        self.epochs = epochs
        self.lr = lr
        self.seed = seed
        self.shuffle = shuffle
        self.batch_size = batch_size

    def _check_shape_params(self):
        if self.window < 2:
            raise ValueError(f"window must be >= 2, got {self.window}")
        if self.hidden_size < 1:
            raise ValueError(f"hidden_size must be >= 1, got {self.hidden_size}")

    def init_params(self, rng=None):
        self._check_shape_params()
        rng = np.random.default_rng(self.seed) if rng is None else rng
        cell = LSTMCell.init(N_FEATURES, self.hidden_size, rng)
        readout = DenseLayer.init(self.hidden_size, N_FEATURES, "identity", rng)
        return cell, readout

    def fit(self, X, y=None):
        cfg = TrainConfig(self.epochs, self.lr, self.seed, self.shuffle, self.batch_size)
        self._check_shape_params()
        M = self.window
        if isinstance(X, (list, tuple)) and X and getattr(X[0], "ndim", 0) == 2:
            seqs = [_as_matrix(x) for x in X]
        else:
            seqs = [_as_matrix(X)]
        # pairs never straddle two sequences
        usable = [s for s in seqs if len(s) > M]
        n_pairs = sum(len(s) - M for s in usable)
        if n_pairs < MIN_LSTM_PAIRS:
            raise InsufficientData(
                f"LSTM needs >= {MIN_LSTM_PAIRS} (window, next) pairs, i.e. a sequence of "
                f">= {M + MIN_LSTM_PAIRS} samples; got {n_pairs} pairs"
            )
        windows = np.concatenate([sliding_windows(s, M)[: len(s) - M] for s in usable])
        targets = np.concatenate([s[M:] for s in usable])

        rng = np.random.default_rng(cfg.seed)
        cell, readout = self.init_params(rng)
        params = cell.params() + readout.params()
        opt = AdamState.for_params(params, lr=cfg.lr)

        curve = []
        for _ in range(cfg.epochs):
            total = 0.0
            for idx in _batches(n_pairs, cfg.batch_size, rng, cfg.shuffle):
                xs = windows[idx].transpose(1, 0, 2)  # (M, batch, 6)
                hs, _, caches = lstm_forward(cell, xs)
                pred, rcache = dense_forward(readout, hs[-1])
                loss, d_pred = mse_loss(pred, targets[idx])
                total += loss * len(idx)
                dh, dWr, dbr = dense_backward(readout, rcache, d_pred)
                d_hs = np.zeros_like(hs)
                d_hs[-1] = dh
                g = lstm_backward_through_time(cell, xs, caches, d_hs)
                grads = [g.params[n] for n in LSTMCell.PARAM_NAMES] + [dWr, dbr]
                adam_step(params, grads, opt)
            curve.append(total / n_pairs)
        self.cell_ = cell
        self.readout_ = readout
        self.loss_curve_ = curve
        logger.debug("lstm loss %.6g -> %.6g", curve[0], curve[-1])
        return self

    @classmethod
    def from_parts(cls, cell: LSTMCell, readout: DenseLayer, window: int, **params) -> "LSTMPredictor":
        if cell.n_input != N_FEATURES or readout.n_out != N_FEATURES or readout.n_in != cell.n_hidden:
            raise ShapeMismatch("LSTM cell/readout widths are inconsistent")
        model = cls(window=window, hidden_size=cell.n_hidden, **params)
        model._check_shape_params()
        model.cell_ = cell
        model.readout_ = readout
        return model

    def predict(self, windows):
        check_is_fitted(self, "cell_")
        windows = np.asarray(windows, dtype=np.float64)
        if windows.ndim != 3 or windows.shape[1] != self.window:
            raise WrongWindowLength(
                f"expected windows of shape (n, {self.window}, 6), got {windows.shape}"
            )
        hs, _, _ = lstm_forward(self.cell_, windows.transpose(1, 0, 2))
        return dense_forward(self.readout_, hs[-1])[0]

    def forecast(self, window) -> np.ndarray:
        """Predict the sample that follows exactly ``self.window`` vectors."""
        check_is_fitted(self, "cell_")
        window = np.asarray(window, dtype=np.float64)
        if window.ndim != 2 or len(window) != self.window:
            raise WrongWindowLength(f"expected {self.window} vectors, got {len(window)}")
        hs, _, _ = lstm_forward(self.cell_, window)
        return dense_forward(self.readout_, hs[-1])[0]


def sliding_windows(seq: np.ndarray, window: int) -> np.ndarray:
    """All stride-1 windows of ``seq`` as an (n - window + 1, window, d) array."""
    view = np.lib.stride_tricks.sliding_window_view(seq, window, axis=0)
    return np.ascontiguousarray(view.transpose(0, 2, 1))


def lstm_forecast(model: LSTMPredictor, window) -> np.ndarray:
    return model.forecast(window)


def train_lstm(samples, cfg: TrainConfig = TrainConfig(), window: int = 20, hidden_size: int = 32) -> LSTMPredictor:
    return LSTMPredictor(window=window, hidden_size=hidden_size, **asdict(cfg)).fit(samples)
