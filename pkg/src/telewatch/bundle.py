"""Versioned JSON model bundle: standardizer, both networks and detector settings."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .detector import DetectorConfig
from .errors import CorruptBundle, UnknownVersion
from .models import Autoencoder, LSTMPredictor, Standardizer
from .nn import GATES, DenseLayer, LSTMCell

FORMAT_VERSION = 1
SUPPORTED_VERSIONS = frozenset({FORMAT_VERSION})


@dataclass
class ModelBundle:
    standardizer: Standardizer
    autoencoder: Autoencoder
    lstm: LSTMPredictor
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    format_version: int = FORMAT_VERSION


def _floats(a) -> list:
    # float() keeps repr round-trip exact; json writes shortest repr
    return [float(v) for v in np.asarray(a).reshape(-1)]


def _layer_doc(layer: DenseLayer) -> dict:
    return {
        "shape": [layer.n_out, layer.n_in],
        "weights": _floats(layer.weights),
        "bias": _floats(layer.bias),
        "activation": layer.activation,
    }


def _layer_from(doc) -> DenseLayer:
    rows, cols = doc["shape"]
    weights = np.array(doc["weights"], dtype=np.float64)
    if weights.size != rows * cols:
        raise CorruptBundle(f"layer weights hold {weights.size} values, shape says {rows}x{cols}")
    return DenseLayer(weights.reshape(rows, cols), np.array(doc["bias"], dtype=np.float64), doc["activation"])


def bundle_to_dict(bundle: ModelBundle) -> dict:
    cell = bundle.lstm.cell_
    return {
        "format_version": bundle.format_version,
        "standardizer": {
            "means": _floats(bundle.standardizer.means_),
            "stds": _floats(bundle.standardizer.stds_),
        },
        "autoencoder": {"layers": [_layer_doc(layer) for layer in bundle.autoencoder.layers_]},
        "lstm": {
            "M": int(bundle.lstm.window),
            "H": int(cell.n_hidden),
            "input": int(cell.n_input),
            "gates": {
                g: {"weights": _floats(getattr(cell, "w_" + g)), "bias": _floats(getattr(cell, "b_" + g))}
                for g in GATES
            },
            "readout": _layer_doc(bundle.lstm.readout_),
        },
        "detector": {
            "mode": bundle.detector.mode.value,
            "t_ae": float(bundle.detector.t_ae),
            "t_lstm": float(bundle.detector.t_lstm),
            "cooldown_s": int(bundle.detector.cooldown_s),
        },
    }


def bundle_from_dict(doc: dict) -> ModelBundle:
    if not isinstance(doc, dict) or "format_version" not in doc:
        raise CorruptBundle("bundle has no format_version")
    version = doc["format_version"]
    if version not in SUPPORTED_VERSIONS:
        raise UnknownVersion(f"bundle format_version {version!r} is not supported")
    try:
        std = Standardizer.from_moments(doc["standardizer"]["means"], doc["standardizer"]["stds"])
        ae = Autoencoder.from_layers([_layer_from(d) for d in doc["autoencoder"]["layers"]])
        lstm_doc = doc["lstm"]
        H, n_in = int(lstm_doc["H"]), int(lstm_doc["input"])
        parts = {}
        for g in GATES:
            w = np.array(lstm_doc["gates"][g]["weights"], dtype=np.float64)
            if w.size != H * (n_in + H):
                raise CorruptBundle(f"gate {g} holds {w.size} weights, expected {H * (n_in + H)}")
            parts["w_" + g] = w.reshape(H, n_in + H)
            parts["b_" + g] = np.array(lstm_doc["gates"][g]["bias"], dtype=np.float64)
        lstm = LSTMPredictor.from_parts(LSTMCell(**parts), _layer_from(lstm_doc["readout"]), int(lstm_doc["M"]))
        det = doc["detector"]
        detector = DetectorConfig(det["mode"], float(det["t_ae"]), float(det["t_lstm"]), int(det["cooldown_s"]))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, CorruptBundle):
            raise
        raise CorruptBundle(f"invalid bundle contents: {exc}") from None
    return ModelBundle(std, ae, lstm, detector, version)


def save_bundle(bundle: ModelBundle) -> bytes:
    return (json.dumps(bundle_to_dict(bundle), indent=1) + "\n").encode("utf-8")


def load_bundle(data: bytes) -> ModelBundle:
    try:
        doc = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptBundle(f"bundle is not valid JSON: {exc}") from None
    return bundle_from_dict(doc)


def read_bundle(path) -> ModelBundle:
    return load_bundle(Path(path).read_bytes())


def write_bundle(path, bundle: ModelBundle) -> None:
    Path(path).write_bytes(save_bundle(bundle))
