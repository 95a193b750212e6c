"""Streaming autoencoder + LSTM ensemble anomaly detection for host telemetry."""

from .bundle import ModelBundle, load_bundle, save_bundle
from .detector import DetectorConfig, Mode, calibrate, decide, ingest, score_run
from .estimator import TelemetryAnomalyDetector
from .models import Autoencoder, LSTMPredictor, Standardizer, euclidean_distance
from .telemetry import FeatureVector, Label, RunRecord, TelemetrySample, parse_csv, write_csv

__version__ = "0.1.0"

__all__ = [
    "Autoencoder",
    "DetectorConfig",
    "FeatureVector",
    "LSTMPredictor",
    "Label",
    "Mode",
    "ModelBundle",
    "RunRecord",
    "Standardizer",
    "TelemetryAnomalyDetector",
    "TelemetrySample",
    "calibrate",
    "decide",
    "euclidean_distance",
    "ingest",
    "load_bundle",
    "parse_csv",
    "save_bundle",
    "score_run",
    "write_csv",
]
