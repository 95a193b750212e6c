"""Streaming ensemble detector.

Each incoming sample is standardized and scored twice: by its autoencoder
reconstruction distance and, once ``window`` earlier samples exist, by the
distance between the LSTM forecast and the sample itself. The ensemble rule
compares both distances against thresholds with strict ``>``.
"""

from __future__ import annotations

import csv
import enum
import io
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Optional, Union

import numpy as np

from .errors import InsufficientData, MalformedRow, OutOfOrderSample
from .models import euclidean_distance
from .telemetry import RunRecord, TelemetrySample, format_float

SCORE_LOG_HEADER = "timestamp_ms,ae_dist,lstm_dist,warned"
MIN_CALIBRATION_SCORES = 50


class Mode(str, enum.Enum):
    BOTH = "both"  # encoder_dis > t_ae and LSTM_dis > t_lstm
    EITHER = "either"  # encoder_dis > t_ae or LSTM_dis > t_lstm


# Defaults taken from the published rule text for each mode.
DEFAULT_THRESHOLDS = {Mode.BOTH: 100.0, Mode.EITHER: 50.0}
DEFAULT_COOLDOWN_S = 30


@dataclass(frozen=True)
class DetectorConfig:
    mode: Mode = Mode.BOTH
    t_ae: float = DEFAULT_THRESHOLDS[Mode.BOTH]
    t_lstm: float = DEFAULT_THRESHOLDS[Mode.BOTH]
    cooldown_s: int = DEFAULT_COOLDOWN_S

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        if not (self.t_ae > 0 and self.t_lstm > 0) or not math.isfinite(self.t_ae + self.t_lstm):
            raise ValueError(f"thresholds must be positive and finite, got {self.t_ae}, {self.t_lstm}")
        if self.cooldown_s < 0:
            raise ValueError(f"cooldown_s must be >= 0, got {self.cooldown_s}")

    @classmethod
    def for_mode(cls, mode: Union[Mode, str] = Mode.BOTH, cooldown_s: int = DEFAULT_COOLDOWN_S) -> "DetectorConfig":
        mode = Mode(mode)
        t = DEFAULT_THRESHOLDS[mode]
        return cls(mode, t, t, cooldown_s)

    def rule(self) -> str:
        op = "and" if self.mode is Mode.BOTH else "or"
        return f"ae>{self.t_ae:g} {op} lstm>{self.t_lstm:g}"

    def with_thresholds(self, t_ae: float, t_lstm: float) -> "DetectorConfig":
        return DetectorConfig(self.mode, t_ae, t_lstm, self.cooldown_s)


@dataclass(frozen=True)
class ScoreRecord:
    """Distances for one sample. ``lstm_dist`` is None during warmup."""

    timestamp_ms: int
    ae_dist: float
    lstm_dist: Optional[float]
    warned: bool

    @property
    def warmup(self) -> bool:
        return self.lstm_dist is None


@dataclass(frozen=True)
class WarningEvent:
    timestamp_ms: int
    ae_dist: float
    lstm_dist: Optional[float]
    rule_fired: str


@dataclass
class DetectorState:
    window: int
    buffer: deque = field(init=False)
    last_timestamp_ms: Optional[int] = None
    last_warning_ms: Optional[int] = None
    samples_seen: int = 0
    warnings_emitted: int = 0

    def __post_init__(self):
        self.buffer = deque(maxlen=self.window)

    @classmethod
    def fresh(cls, bundle) -> "DetectorState":
        return cls(bundle.lstm.window)


def decide(ae_dist: float, lstm_dist: Optional[float], cfg: DetectorConfig) -> bool:
    """Apply the ensemble rule. A warmup LSTM distance (None) never satisfies its clause."""
    ae_hit = ae_dist > cfg.t_ae
    lstm_hit = lstm_dist is not None and lstm_dist > cfg.t_lstm
    if cfg.mode is Mode.BOTH:
        return ae_hit and lstm_hit
    return ae_hit or lstm_hit


def ingest(state: DetectorState, bundle, cfg: DetectorConfig, sample: TelemetrySample):
    """Score one sample, update ``state`` and return ``(ScoreRecord, WarningEvent | None)``."""
    ts = sample.timestamp_ms
    if state.last_timestamp_ms is not None and ts <= state.last_timestamp_ms:
        raise OutOfOrderSample(f"sample at {ts} ms arrived after {state.last_timestamp_ms} ms")

    z = bundle.standardizer.transform(sample.features.as_array())
    ae_dist = euclidean_distance(z, bundle.autoencoder.predict(z))
    lstm_dist = None
    if len(state.buffer) == state.window:
        pred = bundle.lstm.forecast(np.stack(state.buffer))
        lstm_dist = euclidean_distance(z, pred)

    state.buffer.append(z)
    state.last_timestamp_ms = ts
    state.samples_seen += 1

    fired = decide(ae_dist, lstm_dist, cfg)
    if fired and state.last_warning_ms is not None:
        fired = ts - state.last_warning_ms >= cfg.cooldown_s * 1000
    event = None
    if fired:
        state.last_warning_ms = ts
        state.warnings_emitted += 1
        event = WarningEvent(ts, ae_dist, lstm_dist, cfg.rule())
    return ScoreRecord(ts, ae_dist, lstm_dist, fired), event


def score_run(bundle, cfg: DetectorConfig, run: RunRecord):
    """Fold :func:`ingest` over ``run`` from a fresh state."""
    state = DetectorState.fresh(bundle)
    records = [ingest(state, bundle, cfg, s)[0] for s in run.samples]
    return records, sum(r.warned for r in records)


def replay_warnings(records: Iterable[ScoreRecord], cfg: DetectorConfig) -> int:
    """Recount warnings for a recorded score trace under a different config."""
    last = None
    count = 0
    for r in records:
        if decide(r.ae_dist, r.lstm_dist, cfg) and (
            last is None or r.timestamp_ms - last >= cfg.cooldown_s * 1000
        ):
            last = r.timestamp_ms
            count += 1
    return count


def nearest_rank(values, p: float) -> float:
    values = sorted(values)
    rank = max(1, math.ceil(p / 100.0 * len(values)))
    return float(values[rank - 1])


def calibrate(scores, p: float = 99.0) -> tuple[float, float]:
    """Nearest-rank ``p``-th percentile of each distance over training scores.

    ``scores`` holds ScoreRecords or ``(ae_dist, lstm_dist)`` pairs; warmup
    entries (lstm None) only contribute to the autoencoder distribution.
    """
    if not 50 <= p <= 100:
        raise ValueError(f"percentile must lie in [50, 100], got {p}")
    ae, lstm = [], []
    for s in scores:
        a, b = (s.ae_dist, s.lstm_dist) if isinstance(s, ScoreRecord) else s
        ae.append(a)
        if b is not None:
            lstm.append(b)
    if len(ae) < MIN_CALIBRATION_SCORES or len(lstm) < MIN_CALIBRATION_SCORES:
        raise InsufficientData(
            f"calibration needs >= {MIN_CALIBRATION_SCORES} scores per model, "
            f"got {len(ae)} autoencoder / {len(lstm)} LSTM"
        )
    return nearest_rank(ae, p), nearest_rank(lstm, p)


def write_score_log(records: Iterable[ScoreRecord]) -> bytes:
    lines = [SCORE_LOG_HEADER]
    for r in records:
        lstm = "" if r.lstm_dist is None else format_float(r.lstm_dist)
        lines.append(f"{r.timestamp_ms},{format_float(r.ae_dist)},{lstm},{int(r.warned)}")
    return ("\n".join(lines) + "\n").encode("utf-8")


def parse_score_log(data: bytes) -> list[ScoreRecord]:
    reader = csv.reader(io.StringIO(data.decode("utf-8"), newline=""))
    header = next(reader, None)
    if header is None or ",".join(header) != SCORE_LOG_HEADER:
        raise MalformedRow(f"bad score log header {header!r}")
    records = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 4 or row[3] not in ("0", "1"):
            raise MalformedRow(f"line {lineno}: bad score row {row!r}")
        try:
            records.append(
                ScoreRecord(int(row[0]), float(row[1]), float(row[2]) if row[2] else None, row[3] == "1")
            )
        except ValueError:
            raise MalformedRow(f"line {lineno}: non-numeric field in {row!r}") from None
    return records
