"""Telemetry sample schema, CSV replay files and the live host probe.

A sample is six numbers taken once per period (1 Hz by default)::

    cpu_total_pct, cpu_self_pct, mem_used_kb, mem_free_kb, mem_cached_kb, battery_pct
"""

from __future__ import annotations

import csv
import enum
import io
import math
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import BinaryIO, Iterator, Optional, Sequence, Union

import numpy as np

from .errors import MalformedRow, NonMonotoneTimestamp, ProbeUnavailable, RangeViolation

FEATURE_NAMES = (
    "cpu_total_pct",
    "cpu_self_pct",
    "mem_used_kb",
    "mem_free_kb",
    "mem_cached_kb",
    "battery_pct",
)
N_FEATURES = len(FEATURE_NAMES)
CSV_HEADER = "timestamp_ms," + ",".join(FEATURE_NAMES)

_PERCENT_FIELDS = frozenset({"cpu_total_pct", "cpu_self_pct", "battery_pct"})

MIN_PERIOD_MS = 100


class Label(str, enum.Enum):
    BENIGN = "benign"
    MALICIOUS = "malicious"
    UNLABELED = "unlabeled"


def format_float(value: float) -> str:
    """Decimal-point rendering at 6 significant digits (never exponent notation)."""
    return np.format_float_positional(
        float(value), precision=6, unique=False, fractional=False, trim="-"
    )


@dataclass(frozen=True)
class FeatureVector:
    cpu_total_pct: float
    cpu_self_pct: float
    mem_used_kb: float
    mem_free_kb: float
    mem_cached_kb: float
    battery_pct: float

    def __post_init__(self):
        for name in FEATURE_NAMES:
            value = getattr(self, name)
            if not math.isfinite(value):
                raise RangeViolation(f"{name} must be finite, got {value!r}")
            if name in _PERCENT_FIELDS:
                if not 0.0 <= value <= 100.0:
                    raise RangeViolation(f"{name}={value} outside [0, 100]")
            elif value < 0.0:
                raise RangeViolation(f"{name}={value} is negative")

    @classmethod
    def from_values(cls, values: Sequence[float]) -> "FeatureVector":
        if len(values) != N_FEATURES:
            raise MalformedRow(f"expected {N_FEATURES} feature values, got {len(values)}")
        return cls(*(float(v) for v in values))

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in FEATURE_NAMES], dtype=np.float64)


@dataclass(frozen=True)
class TelemetrySample:
    timestamp_ms: int
    features: FeatureVector


@dataclass(frozen=True)
class RunRecord:
    """One recorded run (for instance one application executed for ten minutes)."""

    run_id: str
    label: Label = Label.UNLABELED
    samples: tuple[TelemetrySample, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))
        object.__setattr__(self, "label", Label(self.label))
        prev = None
        for sample in self.samples:
            if prev is not None and sample.timestamp_ms <= prev:
                raise NonMonotoneTimestamp(
                    f"run {self.run_id!r}: timestamp {sample.timestamp_ms} follows {prev}"
                )
            prev = sample.timestamp_ms

    def __len__(self) -> int:
        return len(self.samples)

    def features_array(self) -> np.ndarray:
        """All feature vectors stacked into an (n, 6) float64 array."""
        if not self.samples:
            return np.empty((0, N_FEATURES))
        return np.stack([s.features.as_array() for s in self.samples])

    def timestamps(self) -> np.ndarray:
        return np.array([s.timestamp_ms for s in self.samples], dtype=np.int64)

    def head(self, n: int) -> "RunRecord":
        return RunRecord(self.run_id, self.label, self.samples[:n])

    @classmethod
    def from_arrays(cls, run_id, timestamps_ms, features, label=Label.UNLABELED) -> "RunRecord":
        samples = [
            TelemetrySample(int(ts), FeatureVector.from_values(row))
            for ts, row in zip(timestamps_ms, np.asarray(features, dtype=np.float64))
        ]
        return cls(run_id, label, tuple(samples))


def parse_csv(
    stream: Union[bytes, BinaryIO],
    run_id: str = "",
    label: Label = Label.UNLABELED,
) -> RunRecord:
    """Parse a telemetry CSV (UTF-8, header line first) into a RunRecord."""
    data = stream if isinstance(stream, (bytes, bytearray)) else stream.read()
    try:
        text = bytes(data).decode("utf-8")
    except UnicodeDecodeError as exc:
        raise MalformedRow(f"not UTF-8: {exc}") from None

    reader = csv.reader(io.StringIO(text, newline=""))
    header = next(reader, None)
    if header is None or ",".join(header) != CSV_HEADER:
        raise MalformedRow(f"bad header {header!r}, expected {CSV_HEADER!r}")

    samples = []
    prev_ts = None
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != N_FEATURES + 1:
            raise MalformedRow(f"line {lineno}: expected {N_FEATURES + 1} columns, got {len(row)}")
        try:
            ts = int(row[0])
            values = [float(v) for v in row[1:]]
        except ValueError:
            raise MalformedRow(f"line {lineno}: non-numeric field in {row!r}") from None
        if prev_ts is not None and ts <= prev_ts:
            raise NonMonotoneTimestamp(f"line {lineno}: timestamp {ts} follows {prev_ts}")
        prev_ts = ts
        try:
            features = FeatureVector.from_values(values)
        except RangeViolation as exc:
            raise RangeViolation(f"line {lineno}: {exc}") from None
        samples.append(TelemetrySample(ts, features))
    return RunRecord(run_id, label, tuple(samples))


def write_csv(run: RunRecord) -> bytes:
    lines = [CSV_HEADER]
    for sample in run.samples:
        fv = sample.features
        lines.append(
            ",".join([str(int(sample.timestamp_ms))] + [format_float(getattr(fv, n)) for n in FEATURE_NAMES])
        )
    return ("\n".join(lines) + "\n").encode("utf-8")


def read_run(path, label: Label = Label.UNLABELED, run_id: Optional[str] = None) -> RunRecord:
    path = Path(path)
    with open(path, "rb") as fh:
        return parse_csv(fh, run_id=run_id or path.stem, label=label)


def write_run(path, run: RunRecord) -> None:
    Path(path).write_bytes(write_csv(run))


# -- live probe -------------------------------------------------------------

_probe_lock = threading.Lock()
_last_probe_ms = 0


def _next_timestamp_ms() -> int:
    global _last_probe_ms
    with _probe_lock:
        now = time.time_ns() // 1_000_000
        if now <= _last_probe_ms:
            now = _last_probe_ms + 1
        _last_probe_ms = now
        return now


def probe_host() -> TelemetrySample:
    """Take one sample of the current host's CPU, memory and battery state.

    Raises ProbeUnavailable when psutil is missing or cannot read the
    system counters on this platform.
    """
    try:
        import psutil
    except ImportError:
        raise ProbeUnavailable("psutil is not installed") from None

    try:
        cpu_total = psutil.cpu_percent(interval=None)
        ncpu = psutil.cpu_count() or 1
        cpu_self = psutil.Process().cpu_percent(interval=None) / ncpu
        vm = psutil.virtual_memory()
        battery = psutil.sensors_battery() if hasattr(psutil, "sensors_battery") else None
    except (NotImplementedError, OSError, AttributeError) as exc:
        raise ProbeUnavailable(f"host probe failed: {exc}") from None

    features = FeatureVector(
        cpu_total_pct=min(max(float(cpu_total), 0.0), 100.0),
        cpu_self_pct=min(max(float(cpu_self), 0.0), 100.0),
        mem_used_kb=vm.used / 1024.0,
        mem_free_kb=vm.free / 1024.0,
        mem_cached_kb=getattr(vm, "cached", 0) / 1024.0,
        battery_pct=100.0 if battery is None else min(max(float(battery.percent), 0.0), 100.0),
    )
    return TelemetrySample(_next_timestamp_ms(), features)


def sample_stream(
    source: Union[str, RunRecord],
    period_ms: int = 1000,
    count: Optional[int] = None,
) -> Iterator[TelemetrySample]:
    """Yield samples from a replayed RunRecord or from the live probe.

    ``source`` is either a RunRecord (replayed in order, no sleeping) or the
    string ``"probe"``. In probe mode one sample is taken per ``period_ms``;
    ``count`` bounds the number of samples (unbounded when None).
    """
    if period_ms < MIN_PERIOD_MS:
        raise ValueError(f"period_ms must be >= {MIN_PERIOD_MS}, got {period_ms}")
    if isinstance(source, RunRecord):
        samples = source.samples if count is None else source.samples[:count]
        yield from samples
        return
    if source != "probe":
        raise ValueError(f"unknown sample source {source!r}")

    period_s = period_ms / 1000.0
    next_tick = time.monotonic()
    taken = 0
    while count is None or taken < count:
        yield probe_host()
        taken += 1
        next_tick += period_s
        delay = next_tick - time.monotonic()
        if delay > 0 and (count is None or taken < count):
            time.sleep(delay)
