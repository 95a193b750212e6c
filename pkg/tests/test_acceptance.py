"""Acceptance checks, one PASS/FAIL line per primary criterion.

Run alone with ``pytest tests/test_acceptance.py -v``; the verdict lines are
repeated in an "acceptance criteria" section at the end of the session.
"""

import itertools
import sys
import time
from contextlib import contextmanager

import numpy as np
import pytest

import published
from conftest import ACCEPTANCE_LINES
from test_models import ae_objective
from test_nn import dense_mse_objective, lstm_sequence_objective, random_cell
from telewatch import cli, synthgen
from telewatch.bundle import load_bundle, read_bundle, save_bundle
from telewatch.detector import DetectorConfig, DetectorState, Mode, decide, ingest, score_run, write_score_log
from telewatch.evalkit import ConfusionMatrix, confusion, metrics, parse_outcomes_csv, parse_report_csv, pct
from telewatch.models import Autoencoder, fit_standardizer
from telewatch.nn import DenseLayer, grad_check
from telewatch.telemetry import RunRecord, parse_csv, read_run, sample_stream, write_csv


class Verdict:
    def __init__(self):
        self.ok = True
        self.details = []

    def check(self, ok, detail):
        self.ok = self.ok and bool(ok)
        self.details.append(("" if ok else "!") + detail)


@contextmanager
def criterion(tag, title, limit_s=None):
    v = Verdict()
    start = time.perf_counter()
    try:
        yield v
    finally:
        elapsed = time.perf_counter() - start
        if limit_s is not None:
            v.check(elapsed < limit_s, f"{elapsed:.1f}s < {limit_s:g}s")
        line = f"{'PASS' if v.ok else 'FAIL'}  {tag:<3} {title}: " + "; ".join(v.details)
        ACCEPTANCE_LINES.append(line)
        print(line)
    assert v.ok, line


def metric_strings(report):
    return {name: (pct(m.precision), pct(m.recall), pct(m.f1)) for name, m in report.rows()}


# -- C1 metrics oracle --------------------------------------------------------------


def test_c1a_metrics_reproduce_published_metrics_from_confusion_matrix():
    with criterion("C1a", "metrics oracle, tp=6 fp=0 tn=10 fn=4", limit_s=1) as v:
        got = metric_strings(metrics(ConfusionMatrix(6, 0, 10, 4)))
        for name, expected in published.METRICS.items():
            v.check(got[name] == expected, f"{name} {'/'.join(got[name])}")


def test_c1b_metrics_reproduce_published_metrics_from_published_counts():
    # Expected red: the published per-run counts hold five detections, not six.
    with criterion("C1b", "metrics oracle from published per-run counts", limit_s=1) as v:
        cm = confusion(published.outcomes(), k=1)
        v.check(cm == ConfusionMatrix(6, 0, 10, 4), f"tp={cm.tp} fp={cm.fp} tn={cm.tn} fn={cm.fn}")
        got = metric_strings(metrics(cm))
        v.check(got == published.METRICS, f"macro F1 {got['macro'][2]}% (published 79.2%)")


# -- C2 gradient suite ----------------------------------------------------------------

SEEDS = range(20)
GRAD_TOL = 1e-4


def test_c2_gradient_suite():
    with criterion("C2", "gradient suite, 20 seeds each", limit_s=30) as v:
        worst = {}
        errs = []
        for seed in SEEDS:
            rng = np.random.default_rng(seed)
            for act in ("tanh", "identity", "relu"):
                n_in, n_out = rng.integers(1, 11, size=2)
                layer = DenseLayer(rng.normal(size=(n_out, n_in)) / np.sqrt(n_in), rng.normal(size=n_out), act)
                f, params = dense_mse_objective(layer, rng.normal(size=n_in), rng.normal(size=n_out))
                errs.append(grad_check(f, params))
        worst["dense"] = max(errs)

        errs = []
        for seed in SEEDS:
            rng = np.random.default_rng(seed)
            f, params = ae_objective(Autoencoder(seed=seed).init_layers(), rng.normal(size=(4, 6)))
            errs.append(grad_check(f, params))
        worst["autoencoder"] = max(errs)

        errs = []
        for seed in SEEDS:
            rng = np.random.default_rng(seed)
            n_in, hidden, n_out = rng.integers(1, 7), rng.integers(1, 6), rng.integers(1, 5)
            T = int(rng.integers(1, 6))
            cell = random_cell(rng, n_in, hidden, scale=0.7)
            readout = DenseLayer(rng.normal(size=(n_out, hidden)), rng.normal(size=n_out), "identity")
            f, params = lstm_sequence_objective(cell, readout, rng.normal(size=(T, n_in)), rng.normal(size=(T, n_out)))
            errs.append(grad_check(f, params))
        worst["lstm-bptt"] = max(errs)
        for name, err in worst.items():
            v.check(err < GRAD_TOL, f"{name} max rel err {err:.1e}")


# -- shared CLI pipeline -----------------------------------------------------------------


def run_cli(*argv):
    try:
        return cli.main([str(a) for a in argv])
    except SystemExit as exc:
        return exc.code


def cli_pipeline(root):
    """synth -> train -> calibrate(p=99) -> detect -> eval with default settings."""
    start = time.perf_counter()
    codes = [
        run_cli("synth", "--seed", 0, "--out", root / "suite"),
        run_cli("synth", "--suite", "baseline", "--seed", 1, "--out", root / "train"),
        run_cli("train", root / "train" / "baseline.csv", "--seed", 0, "--out", root / "model.json"),
        run_cli("calibrate", root / "model.json", root / "train" / "baseline.csv", "--percentile", 99),
    ]
    inputs = sorted(p for p in (root / "suite").glob("*.csv") if p.name != "labels.csv")
    codes.append(run_cli("detect", root / "model.json", *inputs, "--log-dir", root / "scores"))
    codes.append(run_cli("eval", "--scores", root / "scores", "--labels", root / "suite" / "labels.csv", "--out", root / "report"))
    return codes, time.perf_counter() - start


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("pipeline_a")
    codes, elapsed = cli_pipeline(root)
    return root, codes, elapsed


# -- C3 end-to-end detection ----------------------------------------------------------


def test_c3_end_to_end_detection(pipeline, capsys):
    root, codes, elapsed = pipeline
    with criterion("C3", "end-to-end synthetic detection") as v:
        v.check(codes == [0, 0, 0, 0, 2, 0], f"exit codes {codes}")
        v.check(elapsed < 120, f"pipeline {elapsed:.1f}s < 120s")
        outcomes = parse_outcomes_csv((root / "report" / "outcomes.csv").read_bytes())
        cm = confusion(outcomes)
        f1 = parse_report_csv((root / "report" / "report.csv").read_bytes())["macro"].f1
        v.check(f1 >= 0.90, f"macro F1 {f1:.3f} >= 0.90")
        v.check(cm.fp == 0, f"fp={cm.fp} (tp={cm.tp} tn={cm.tn} fn={cm.fn})")

        bundle = read_bundle(root / "model.json")
        for spec, label in synthgen.standard_suite(seed=0):
            if not spec.name.endswith("_delayed"):
                continue
            run = synthgen.generate_run(spec, label=label)
            cutoff = spec.start_ms + spec.onset_s * 1000
            truncated = RunRecord(run.run_id, label, tuple(s for s in run.samples if s.timestamp_ms < cutoff))
            _, n = score_run(bundle, bundle.detector, truncated)
            full = next(o.warning_count for o in outcomes if o.run_id == spec.name)
            v.check(n == 0 and full > 0, f"{spec.name}: {n} warnings before onset at {spec.onset_s}s, {full} on full run")
    capsys.readouterr()


# -- C4 stream / batch equivalence -------------------------------------------------------


def random_run(rng, k):
    d = int(rng.integers(15, 60))
    means, stds = synthgen.app_baseline(float(rng.uniform(0, 1)))
    injections = ()
    if rng.random() < 0.6:
        start = int(rng.integers(0, d - 1))
        injections = (synthgen.Injection(start, int(rng.integers(start + 1, d + 1)), int(rng.integers(0, 6)), factor=float(rng.uniform(0.3, 2.5))),)
    return synthgen.generate_run(synthgen.ScenarioSpec(d, int(rng.integers(2**31)), means, stds, injections), run_id=f"rand{k}")


def test_c4_stream_batch_equivalence(pipeline):
    root = pipeline[0]
    bundle = read_bundle(root / "model.json")
    rng = np.random.default_rng(2024)
    with criterion("C4", "stream/batch equivalence, 100 randomized runs") as v:
        mismatches, warned_runs = 0, 0
        for k in range(100):
            run = random_run(rng, k)
            cfg = DetectorConfig(
                Mode.BOTH if rng.random() < 0.5 else Mode.EITHER,
                bundle.detector.t_ae * float(rng.uniform(0.2, 2)),
                bundle.detector.t_lstm * float(rng.uniform(0.2, 2)),
                int(rng.choice([0, 5, 30])),
            )
            batch, batch_count = score_run(bundle, cfg, run)
            state = DetectorState.fresh(bundle)
            stream = [ingest(state, bundle, cfg, s)[0] for s in sample_stream(run)]
            same = write_score_log(stream) == write_score_log(batch) and stream == batch
            same = same and state.warnings_emitted == batch_count
            mismatches += not same
            warned_runs += batch_count > 0
        v.check(mismatches == 0, f"{mismatches} mismatching runs ({warned_runs} runs with warnings)")


# -- C5 determinism ---------------------------------------------------------------------


def test_c5_determinism(pipeline, tmp_path, capsys):
    root_a = pipeline[0]
    codes, _ = cli_pipeline(tmp_path)
    capsys.readouterr()
    with criterion("C5", "determinism across two pipeline executions") as v:
        v.check(codes == pipeline[1], f"exit codes {codes}")
        for rel in ("model.json", "report/report.csv", "report/report.txt", "report/outcomes.csv"):
            v.check((root_a / rel).read_bytes() == (tmp_path / rel).read_bytes(), f"{rel} identical")


# -- C6 standardizer and round-trips -------------------------------------------------------


def test_c6_standardizer_and_round_trips(pipeline):
    with criterion("C6", "standardizer moments, CSV and bundle round-trips") as v:
        baseline = read_run(pipeline[0] / "train" / "baseline.csv")
        X = baseline.features_array()
        Z = fit_standardizer(X).transform(X)
        live = X.std(axis=0) > 0
        v.check(np.all(np.abs(Z.mean(axis=0)) < 1e-9), f"max |mean| {np.abs(Z.mean(axis=0)).max():.1e}")
        v.check(np.all(np.abs(Z.std(axis=0)[live] - 1) < 1e-9), f"max |std-1| {np.abs(Z.std(axis=0)[live] - 1).max():.1e}")

        rng = np.random.default_rng(6)
        worst = 0.0
        for _ in range(50):
            n = int(rng.integers(0, 80))
            feats = np.column_stack([rng.uniform(0, 100, n), rng.uniform(0, 100, n), rng.uniform(0, 8e6, n),
                                     rng.uniform(0, 8e6, n), rng.uniform(0, 2e6, n), rng.uniform(0, 100, n)])
            run = RunRecord.from_arrays("r", np.cumsum(rng.integers(1, 3000, n)), feats)
            back = parse_csv(write_csv(run))
            assert back.timestamps().tolist() == run.timestamps().tolist()
            if n:
                worst = max(worst, float(np.max(np.abs(back.features_array() - feats) / np.maximum(np.abs(feats), 1e-300))))
        v.check(worst <= 5e-6, f"CSV max rel err {worst:.1e} <= 5e-6")

        bundle = read_bundle(pipeline[0] / "model.json")
        back = load_bundle(save_bundle(bundle))
        Zin = rng.normal(size=(100, 6))
        windows = rng.normal(size=(100, bundle.lstm.window, 6))
        exact = (
            np.array_equal(back.autoencoder.predict(Zin), bundle.autoencoder.predict(Zin))
            and np.array_equal(back.lstm.predict(windows), bundle.lstm.predict(windows))
            and np.array_equal(back.standardizer.transform(Zin), bundle.standardizer.transform(Zin))
            and back.detector == bundle.detector
        )
        v.check(exact, "bundle outputs bit-identical on 100 inputs")


# -- C7 threshold semantics ---------------------------------------------------------------


def test_c7_threshold_semantics():
    with criterion("C7", "ensemble truth tables and 1,000 random pairs") as v:
        bad = 0
        for mode, t in ((Mode.BOTH, 100.0), (Mode.EITHER, 50.0)):
            cfg = DetectorConfig(mode, t, t)
            for da, dl in itertools.product((-1.0, 0.0, 1.0), repeat=2):
                want = (da > 0 and dl > 0) if mode is Mode.BOTH else (da > 0 or dl > 0)
                bad += decide(t + da, t + dl, cfg) != want
        v.check(bad == 0, f"{bad}/18 truth-table cells wrong")

        rng = np.random.default_rng(7)
        violations = 0
        for _ in range(1000):
            ae, lstm = rng.exponential(2, size=2)
            t_ae, t_lstm = rng.uniform(0.1, 5, size=2)
            scale = rng.uniform(0, 1, size=2)
            for mode in Mode:
                hi = DetectorConfig(mode, t_ae, t_lstm)
                lo = DetectorConfig(mode, t_ae * scale[0] + 1e-9, t_lstm * scale[1] + 1e-9)
                violations += decide(ae, lstm, hi) and not decide(ae, lstm, lo)
            violations += decide(ae, lstm, DetectorConfig(Mode.BOTH, t_ae, t_lstm)) and not decide(
                ae, lstm, DetectorConfig(Mode.EITHER, t_ae, t_lstm)
            )
        v.check(violations == 0, f"{violations} monotonicity/dominance violations")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
