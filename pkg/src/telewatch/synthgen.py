"""Deterministic synthetic telemetry: benign baselines and runs with injected anomalies.

A benign application is modelled as a load level in [0, 1] that sets the
mean of every feature (busier apps use more CPU, more memory and drain the
battery further), plus independent Gaussian noise. Anomalies are superposed
on that baseline as steps, ramps or spike trains.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .errors import InvalidSpec
from .telemetry import FEATURE_NAMES, N_FEATURES, FeatureVector, Label, RunRecord, TelemetrySample

logger = logging.getLogger(__name__)

SHAPES = ("step", "ramp", "spike-train")
START_MS = 1_600_000_000_000
PERIOD_MS = 1000

# per-feature (value at load 0, change at load 1, noise std)
_LOAD_MODEL = np.array(
    [
        [8.0, 60.0, 2.0],  # cpu_total_pct
        [0.4, 1.6, 0.05],  # cpu_self_pct
        [1.6e6, 1.2e6, 1.5e4],  # mem_used_kb
        [3.8e6, -1.5e6, 1.5e4],  # mem_free_kb
        [6.0e5, 3.0e5, 8.0e3],  # mem_cached_kb
        [95.0, -15.0, 0.25],  # battery_pct
    ]
)
_UPPER = np.array([100.0, 100.0, np.inf, np.inf, np.inf, 100.0])


def app_baseline(load: float) -> tuple[tuple[float, ...], tuple[float, ...]]:
    """Feature means and noise stds of a benign app running at ``load``."""
    means = _LOAD_MODEL[:, 0] + load * _LOAD_MODEL[:, 1]
    return tuple(float(v) for v in means), tuple(float(v) for v in _LOAD_MODEL[:, 2])


@dataclass(frozen=True)
class Injection:
    """An anomaly on one feature over ``[start_s, end_s)``.

    Exactly one of ``delta`` (raw units, added) or ``factor`` (multiplies
    the baseline mean) is given. ``ramp`` grows linearly from 0 to the full
    change across the interval; ``spike-train`` applies the full change for
    ``spike_width_s`` seconds every ``spike_period_s`` seconds.
    """

    start_s: int
    end_s: int
    feature: int
    delta: Optional[float] = None
    factor: Optional[float] = None
    shape: str = "step"
    spike_period_s: int = 15
    spike_width_s: int = 1


@dataclass(frozen=True)
class ScenarioSpec:
    duration_s: int
    seed: int
    means: tuple
    stds: tuple
    injections: tuple = ()
    name: str = ""
    start_ms: int = START_MS

    def __post_init__(self):
        object.__setattr__(self, "means", tuple(float(v) for v in self.means))
        object.__setattr__(self, "stds", tuple(float(v) for v in self.stds))
        object.__setattr__(
            self, "injections", tuple(i if isinstance(i, Injection) else Injection(**i) for i in self.injections)
        )
        validate_spec(self)

    @property
    def onset_s(self) -> Optional[int]:
        return min((i.start_s for i in self.injections), default=None)


def validate_spec(spec: ScenarioSpec) -> None:
    if int(spec.duration_s) != spec.duration_s or spec.duration_s <= 0:
        raise InvalidSpec(f"duration_s must be a positive integer, got {spec.duration_s}")
    if len(spec.means) != N_FEATURES or len(spec.stds) != N_FEATURES:
        raise InvalidSpec(f"baseline needs {N_FEATURES} means and stds")
    if not all(np.isfinite(spec.means)) or any(not np.isfinite(s) or s < 0 for s in spec.stds):
        raise InvalidSpec("baseline means must be finite and stds finite and >= 0")
    for inj in spec.injections:
        if not 0 <= inj.start_s < inj.end_s <= spec.duration_s:
            raise InvalidSpec(f"injection [{inj.start_s}, {inj.end_s}) outside [0, {spec.duration_s}]")
        if not 0 <= inj.feature < N_FEATURES:
            raise InvalidSpec(f"feature index {inj.feature} out of range")
        if (inj.delta is None) == (inj.factor is None):
            raise InvalidSpec("an injection needs exactly one of delta or factor")
        if inj.shape not in SHAPES:
            raise InvalidSpec(f"unknown injection shape {inj.shape!r}")
        if inj.spike_period_s < 1 or not 1 <= inj.spike_width_s <= inj.spike_period_s:
            raise InvalidSpec("spike train needs 1 <= spike_width_s <= spike_period_s")


def injection_profile(inj: Injection, mean: float, duration_s: int) -> np.ndarray:
    """Per-second additive change produced by ``inj`` on a feature with baseline ``mean``."""
    change = inj.delta if inj.delta is not None else mean * (inj.factor - 1.0)
    out = np.zeros(duration_s)
    t = np.arange(inj.start_s, inj.end_s)
    if inj.shape == "step":
        out[t] = change
    elif inj.shape == "ramp":
        out[t] = change * (t - inj.start_s + 1) / (inj.end_s - inj.start_s)
    else:
        on = (t - inj.start_s) % inj.spike_period_s < inj.spike_width_s
        out[t[on]] = change
    return out


def generate_run_with_stats(spec: ScenarioSpec, run_id: str = "", label: Label = Label.UNLABELED):
    """Generate the run and return ``(RunRecord, clamped_value_count)``."""
    n = spec.duration_s
    rng = np.random.default_rng(spec.seed)
    means = np.array(spec.means)
    values = means + rng.standard_normal((n, N_FEATURES)) * np.array(spec.stds)
    for inj in spec.injections:
        values[:, inj.feature] += injection_profile(inj, means[inj.feature], n)
    clipped = np.clip(values, 0.0, _UPPER)
    n_clamped = int(np.count_nonzero(clipped != values))
    if n_clamped:
        logger.info("scenario %r: clamped %d values into range", spec.name or run_id, n_clamped)
    timestamps = spec.start_ms + PERIOD_MS * np.arange(n)
    samples = tuple(
        TelemetrySample(int(ts), FeatureVector(*(float(v) for v in row))) for ts, row in zip(timestamps, clipped)
    )
    return RunRecord(run_id or spec.name, label, samples), n_clamped


def generate_run(spec: ScenarioSpec, run_id: str = "", label: Label = Label.UNLABELED) -> RunRecord:
    return generate_run_with_stats(spec, run_id, label)[0]


def standard_suite(seed: int = 0, duration_s: int = 600) -> list[tuple[ScenarioSpec, Label]]:
    """Ten benign and ten anomalous ten-minute scenarios.

    The last two anomalous scenarios start after 80% of the run, standing in
    for malware that delays its malicious phase. Injection times scale with
    ``duration_s``.
    """
    d = duration_s
    benign = []
    for k in range(10):
        means, stds = app_baseline(0.05 + 0.1 * k)
        benign.append(ScenarioSpec(d, seed * 1000 + k, means, stds, (), f"benign_{k:02d}"))

    std = _LOAD_MODEL[:, 2]

    def at(t):
        # onsets are laid out for a 600 s run and scale with the duration
        return int(t * d / 600)

    anomalous_defs = [
        # (load, injections)
        (0.2, [Injection(at(120), at(300), 0, delta=20 * std[0])]),
        (0.3, [Injection(at(100), at(400), 0, delta=30 * std[0], shape="spike-train", spike_period_s=20, spike_width_s=2)]),
        (0.4, [Injection(at(150), at(180), 2, delta=100 * std[2], shape="ramp")]),
        (0.5, [Injection(at(200), at(230), 5, delta=-100 * std[5], shape="ramp")]),
        (0.15, [Injection(at(250), at(400), 4, factor=1.6)]),
        (0.6, [Injection(at(60), at(240), 0, delta=12 * std[0]), Injection(at(60), at(240), 2, delta=40 * std[2])]),
        (0.35, [Injection(at(300), at(450), 3, factor=0.5)]),
        (0.25, [Injection(at(180), at(200), 0, delta=25 * std[0], shape="ramp")]),
        (0.45, [Injection(int(0.85 * d), d, 0, delta=20 * std[0])]),
        (0.1, [Injection(int(0.82 * d), d, 2, delta=80 * std[2], shape="spike-train", spike_period_s=10, spike_width_s=2)]),
    ]
    anomalous = []
    for k, (load, injections) in enumerate(anomalous_defs):
        means, stds = app_baseline(load)
        name = f"anomalous_{k:02d}" + ("_delayed" if injections[0].start_s >= 0.8 * d else "")
        anomalous.append(ScenarioSpec(d, seed * 1000 + 100 + k, means, stds, tuple(injections), name))
    return [(s, Label.BENIGN) for s in benign] + [(s, Label.MALICIOUS) for s in anomalous]


def baseline_run(seed: int = 0, duration_s: int = 900, segment_s: int = 60, sweep_step: float = 0.22) -> RunRecord:
    """A benign training run that switches app every ``segment_s`` seconds.

    Load levels sweep up and down across [0, 1] (a triangle wave with a
    seeded phase and small jitter), so the run visits every load a benign
    scenario can take while consecutive apps differ only moderately.
    """
    rng = np.random.default_rng(seed)
    n_segments = -(-duration_s // segment_s)
    phase = rng.uniform(0.0, 0.1)
    samples = []
    for k in range(n_segments):
        x = (phase + k * sweep_step) % 2.0
        load = float(np.clip((x if x <= 1.0 else 2.0 - x) + rng.uniform(-0.02, 0.02), 0.0, 1.0))
        length = min(segment_s, duration_s - k * segment_s)
        means, stds = app_baseline(load)
        start = START_MS + k * segment_s * PERIOD_MS
        seg = generate_run(ScenarioSpec(length, seed * 7919 + k + 1, means, stds, start_ms=start))
        samples.extend(seg.samples)
    return RunRecord("baseline", Label.BENIGN, tuple(samples))


def spec_to_json(spec: ScenarioSpec) -> str:
    doc = asdict(spec)
    doc["injections"] = [asdict(i) for i in spec.injections]
    return json.dumps(doc, indent=1)


def spec_from_json(text: str) -> ScenarioSpec:
    try:
        doc = json.loads(text)
        if not isinstance(doc, dict):
            raise InvalidSpec("scenario document must be a JSON object")
        if isinstance(doc.get("means"), dict):
            doc["means"] = [doc["means"][n] for n in FEATURE_NAMES]
        if isinstance(doc.get("stds"), dict):
            doc["stds"] = [doc["stds"][n] for n in FEATURE_NAMES]
        doc["injections"] = tuple(Injection(**i) for i in doc.get("injections", ()))
        return ScenarioSpec(**doc)
    except InvalidSpec:
        raise
    except (json.JSONDecodeError, TypeError, KeyError, ValueError) as exc:
        raise InvalidSpec(f"bad scenario document: {exc}") from None
