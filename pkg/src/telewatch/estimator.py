"""End-to-end estimator: fit both models on benign telemetry, then score runs."""

from __future__ import annotations

import logging
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator, OutlierMixin
from sklearn.utils.validation import check_is_fitted

from .bundle import ModelBundle
from .detector import DetectorConfig, Mode, DEFAULT_THRESHOLDS, calibrate, score_run
from .models import Autoencoder, LSTMPredictor, Standardizer
from .telemetry import Label, RunRecord

logger = logging.getLogger(__name__)


def as_run(X, run_id: str = "input") -> RunRecord:
    """Accept a RunRecord or an (n, 6) array sampled at 1 Hz."""
    if isinstance(X, RunRecord):
        return X
    X = np.asarray(X, dtype=np.float64)
    return RunRecord.from_arrays(run_id, 1000 * np.arange(1, len(X) + 1), X)


class TelemetryAnomalyDetector(OutlierMixin, BaseEstimator):
    """Autoencoder + LSTM ensemble detector.

    ``fit`` standardizes the training telemetry, trains both networks and,
    when ``percentile`` is set, replaces any unset threshold with the
    nearest-rank percentile of the training distances. ``predict`` returns
    -1 for samples that raised a warning and 1 otherwise, following the
    scikit-learn outlier convention.
    """

    def __init__(
        self,
        mode="both",
        t_ae: Optional[float] = None,
        t_lstm: Optional[float] = None,
        cooldown_s=30,
        percentile: Optional[float] = None,
        window=20,
        hidden_size=32,
        epochs=50,
        lr=1e-3,
        seed=0,
        batch_size=16,
    ):
        self.mode = mode
        self.t_ae = t_ae
        self.t_lstm = t_lstm
        self.cooldown_s = cooldown_s
        self.percentile = percentile
        self.window = window
        self.hidden_size = hidden_size
        self.epochs = epochs
        self.lr = lr
        self.seed = seed
        self.batch_size = batch_size

    def fit(self, X, y=None):
        """Train on one run (RunRecord or (n, 6) array) or a list of runs."""
        runs = [as_run(x, f"train{i}") for i, x in enumerate(X)] if isinstance(X, list) else [as_run(X, "train")]
        raws = [r.features_array() for r in runs]
        std = Standardizer().fit(np.concatenate(raws))
        Zs = [std.transform(raw) for raw in raws]
        train = dict(epochs=self.epochs, lr=self.lr, seed=self.seed, batch_size=self.batch_size)
        ae = Autoencoder(**train).fit(np.concatenate(Zs))
        lstm = LSTMPredictor(window=self.window, hidden_size=self.hidden_size, **train).fit(Zs)
        default = DEFAULT_THRESHOLDS[Mode(self.mode)]
        cfg = DetectorConfig(
            self.mode,
            default if self.t_ae is None else self.t_ae,
            default if self.t_lstm is None else self.t_lstm,
            self.cooldown_s,
        )
        self.bundle_ = ModelBundle(std, ae, lstm, cfg)
        self.train_losses_ = {"autoencoder": ae.loss_curve_[-1], "lstm": lstm.loss_curve_[-1]}
        if self.percentile is not None:
            self.calibrate(runs, self.percentile)
        return self

    def calibrate(self, X, percentile: float = 99.0):
        """Set the unset thresholds from benign data (all of them when none were given).

        Each run is scored from a fresh detector state and the distances are pooled.
        """
        check_is_fitted(self, "bundle_")
        runs = X if isinstance(X, list) else [X]
        records = []
        for i, x in enumerate(runs):
            records += score_run(self.bundle_, self.bundle_.detector, as_run(x, f"calibration{i}"))[0]
        t_ae, t_lstm = calibrate(records, percentile)
        cfg = self.bundle_.detector
        self.bundle_.detector = cfg.with_thresholds(
            t_ae if self.t_ae is None else cfg.t_ae,
            t_lstm if self.t_lstm is None else cfg.t_lstm,
        )
        logger.info("calibrated thresholds at p=%s: %s", percentile, self.bundle_.detector.rule())
        return self

    @classmethod
    def from_bundle(cls, bundle: ModelBundle) -> "TelemetryAnomalyDetector":
        cfg = bundle.detector
        est = cls(
            mode=cfg.mode.value,
            t_ae=cfg.t_ae,
            t_lstm=cfg.t_lstm,
            cooldown_s=cfg.cooldown_s,
            window=bundle.lstm.window,
            hidden_size=bundle.lstm.hidden_size,
        )
        est.bundle_ = bundle
        return est

    def score_run(self, X):
        """ScoreRecords and the warning count for one run."""
        check_is_fitted(self, "bundle_")
        return score_run(self.bundle_, self.bundle_.detector, as_run(X))

    def score_samples(self, X):
        """(n, 2) array of autoencoder and LSTM distances; NaN marks LSTM warmup."""
        records, _ = self.score_run(X)
        return np.array(
            [[r.ae_dist, np.nan if r.lstm_dist is None else r.lstm_dist] for r in records]
        ).reshape(-1, 2)

    def predict(self, X):
        records, _ = self.score_run(X)
        return np.array([-1 if r.warned else 1 for r in records], dtype=int)

    def classify(self, X, k: int = 1) -> Label:
        _, count = self.score_run(X)
        return Label.MALICIOUS if count >= k else Label.BENIGN
