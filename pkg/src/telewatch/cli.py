"""Command-line front end: collect/synth -> train -> calibrate -> detect -> eval.

Exit codes: 0 success (and, for ``detect``, no warnings), 1 runtime error,
2 anomalies found by ``detect``, 64 bad command-line usage.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Optional

from . import evalkit, synthgen
from .bundle import read_bundle, write_bundle
from .detector import DetectorConfig, DetectorState, Mode, DEFAULT_THRESHOLDS, ingest, write_score_log
from .errors import TelewatchError
from .estimator import TelemetryAnomalyDetector
from .telemetry import Label, RunRecord, read_run, sample_stream, write_csv, write_run

logger = logging.getLogger("telewatch")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_WARNINGS = 2
EXIT_USAGE = 64


@dataclass
class AppConfig:
    period_ms: int = 1000
    train_duration_s: int = 900
    detect_duration_s: int = 600
    mode: str = "both"
    t_ae: Optional[float] = None
    t_lstm: Optional[float] = None
    cooldown_s: int = 30
    epochs: int = 50
    lr: float = 1e-3
    seed: int = 0
    percentile: float = 99.0
    out: Optional[str] = None

    def validate(self) -> "AppConfig":
        if self.period_ms < 100:
            raise ValueError(f"period_ms must be >= 100, got {self.period_ms}")
        if self.train_duration_s <= 0 or self.detect_duration_s <= 0:
            raise ValueError("durations must be positive")
        Mode(self.mode)
        for t in (self.t_ae, self.t_lstm):
            if t is not None and t <= 0:
                raise ValueError(f"thresholds must be positive, got {t}")
        if self.cooldown_s < 0:
            raise ValueError("cooldown_s must be >= 0")
        return self


def read_config_file(path) -> dict:
    """Parse a flat ``key=value`` file; ``#`` starts a comment, ``-`` and ``_`` are interchangeable."""
    known = {f.name: f.type for f in fields(AppConfig)}
    values = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in known:
            raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
        values[key] = value
    return values


def _coerce(name: str, value):
    if value is None:
        return None
    if name in ("period_ms", "train_duration_s", "detect_duration_s", "cooldown_s", "epochs", "seed"):
        return int(value)
    if name in ("t_ae", "t_lstm", "lr", "percentile"):
        return float(value)
    return str(value)


def build_config(args) -> AppConfig:
    cfg = AppConfig()
    layers = [read_config_file(args.config)] if getattr(args, "config", None) else []
    layers.append({f.name: getattr(args, f.name, None) for f in fields(AppConfig)})
    for layer in layers:
        updates = {k: _coerce(k, v) for k, v in layer.items() if v is not None}
        cfg = replace(cfg, **updates)
    return cfg.validate()


def detector_config(cfg: AppConfig, base: Optional[DetectorConfig] = None, args=None) -> DetectorConfig:
    """Bundle settings overridden by whatever the user set explicitly."""
    explicit = set()
    if args is not None:
        explicit = {k for k in ("mode", "t_ae", "t_lstm", "cooldown_s") if getattr(args, k, None) is not None}
        if getattr(args, "config", None):
            explicit |= set(read_config_file(args.config)) & {"mode", "t_ae", "t_lstm", "cooldown_s"}
    if base is None:
        default = DEFAULT_THRESHOLDS[Mode(cfg.mode)]
        return DetectorConfig(
            cfg.mode,
            default if cfg.t_ae is None else cfg.t_ae,
            default if cfg.t_lstm is None else cfg.t_lstm,
            cfg.cooldown_s,
        )
    return DetectorConfig(
        cfg.mode if "mode" in explicit else base.mode,
        cfg.t_ae if "t_ae" in explicit and cfg.t_ae is not None else base.t_ae,
        cfg.t_lstm if "t_lstm" in explicit and cfg.t_lstm is not None else base.t_lstm,
        cfg.cooldown_s if "cooldown_s" in explicit else base.cooldown_s,
    )


def _read_runs(paths, label=Label.UNLABELED) -> list[RunRecord]:
    return [read_run(p, label=label) for p in paths]


# -- subcommands --------------------------------------------------------------


def cmd_collect(args, cfg: AppConfig) -> int:
    duration = args.duration if args.duration is not None else cfg.train_duration_s
    count = max(1, round(duration * 1000 / cfg.period_ms))
    if args.replay:
        source = read_run(args.replay)
    else:
        source = "probe"
    out = args.out or cfg.out
    if out is None:
        raise ValueError("collect needs --out")
    # fail on an unwritable path before spending the collection time
    with open(out, "wb") as fh:
        samples = list(sample_stream(source, cfg.period_ms, count))
        run = RunRecord(Path(out).stem, Label.UNLABELED, tuple(samples))
        fh.write(write_csv(run))
    print(f"wrote {len(run)} samples to {out}")
    return EXIT_OK


def cmd_synth(args, cfg: AppConfig) -> int:
    out = Path(args.out or cfg.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    labels = {}
    if args.spec:
        spec = synthgen.spec_from_json(Path(args.spec).read_text())
        if args.seed is not None:
            spec = replace(spec, seed=cfg.seed)
        name = spec.name or Path(args.spec).stem
        label = Label.MALICIOUS if spec.injections else Label.BENIGN
        run, clamped = synthgen.generate_run_with_stats(spec, name, label)
        write_run(out / f"{name}.csv", run)
        labels[name] = label
        if clamped:
            print(f"{name}: clamped {clamped} values into range")
    elif args.suite == "baseline":
        run = synthgen.baseline_run(cfg.seed, cfg.train_duration_s)
        write_run(out / "baseline.csv", run)
        print(f"wrote {len(run)}-sample baseline run to {out / 'baseline.csv'}")
        return EXIT_OK
    else:
        for spec, label in synthgen.standard_suite(cfg.seed, cfg.detect_duration_s):
            run, clamped = synthgen.generate_run_with_stats(spec, spec.name, label)
            write_run(out / f"{spec.name}.csv", run)
            labels[spec.name] = label
            if clamped:
                print(f"{spec.name}: clamped {clamped} values into range")
    (out / "labels.csv").write_bytes(evalkit.labels_to_csv(labels))
    print(f"wrote {len(labels)} runs and labels.csv to {out}")
    return EXIT_OK


def cmd_train(args, cfg: AppConfig) -> int:
    runs = _read_runs(args.inputs, Label.BENIGN)
    est = TelemetryAnomalyDetector(
        mode=cfg.mode,
        t_ae=cfg.t_ae,
        t_lstm=cfg.t_lstm,
        cooldown_s=cfg.cooldown_s,
        epochs=cfg.epochs,
        lr=cfg.lr,
        seed=cfg.seed,
    ).fit(runs)
    out = args.out or cfg.out or "model.json"
    write_bundle(out, est.bundle_)
    losses = est.train_losses_
    print(f"final loss: autoencoder={losses['autoencoder']:.6g} lstm={losses['lstm']:.6g}")
    print(f"wrote bundle to {out} ({est.bundle_.detector.rule()})")
    return EXIT_OK


def cmd_calibrate(args, cfg: AppConfig) -> int:
    p = args.percentile if args.percentile is not None else cfg.percentile
    if not 50 <= p <= 100:
        raise ValueError(f"percentile must lie in [50, 100], got {p}")
    bundle = read_bundle(args.bundle)
    est = TelemetryAnomalyDetector.from_bundle(bundle)
    est.t_ae = est.t_lstm = None
    est.calibrate(_read_runs(args.inputs, Label.BENIGN), p)
    out = args.out or cfg.out or args.bundle
    write_bundle(out, est.bundle_)
    print(f"calibrated at p={p:g}: {est.bundle_.detector.rule()}; wrote {out}")
    return EXIT_OK


def _detect_one(bundle, dcfg, samples, log_path=None) -> int:
    state = DetectorState.fresh(bundle)
    records = []
    for sample in samples:
        record, event = ingest(state, bundle, dcfg, sample)
        records.append(record)
        if event is not None:
            lstm = "warmup" if event.lstm_dist is None else f"{event.lstm_dist:.6g}"
            print(f"WARN {event.timestamp_ms} ae={event.ae_dist:.6g} lstm={lstm}", flush=True)
    if log_path is not None:
        Path(log_path).write_bytes(write_score_log(records))
    return state.warnings_emitted


def cmd_detect(args, cfg: AppConfig) -> int:
    bundle = read_bundle(args.bundle)
    dcfg = detector_config(cfg, bundle.detector, args)
    total = 0
    if not args.inputs:
        count = round((args.duration or cfg.detect_duration_s) * 1000 / cfg.period_ms)
        total += _detect_one(bundle, dcfg, sample_stream("probe", cfg.period_ms, count), args.out or cfg.out)
    else:
        if len(args.inputs) > 1 and (args.out or cfg.out):
            raise ValueError("--out takes a single input; use --log-dir for several")
        log_dir = Path(args.log_dir) if args.log_dir else None
        if log_dir is not None:
            log_dir.mkdir(parents=True, exist_ok=True)
        for path in args.inputs:
            run = read_run(path)
            log = log_dir / f"{run.run_id}.csv" if log_dir is not None else (args.out or cfg.out)
            n = _detect_one(bundle, dcfg, sample_stream(run, cfg.period_ms), log)
            if len(args.inputs) > 1:
                print(f"{run.run_id}: {n} warnings")
            total += n
    return EXIT_WARNINGS if total else EXIT_OK


def _outcomes_from_scores(score_dir: Path, labels_path: Path) -> list[evalkit.RunOutcome]:
    from .detector import parse_score_log

    labels = evalkit.parse_labels_csv(labels_path.read_bytes())
    outcomes = []
    for run_id, label in labels.items():
        records = parse_score_log((score_dir / f"{run_id}.csv").read_bytes())
        outcomes.append(evalkit.RunOutcome(run_id, label, sum(r.warned for r in records)))
    return outcomes


def cmd_eval(args, cfg: AppConfig) -> int:
    if args.outcomes:
        outcomes = evalkit.parse_outcomes_csv(Path(args.outcomes).read_bytes())
    elif args.scores and args.labels:
        outcomes = _outcomes_from_scores(Path(args.scores), Path(args.labels))
    else:
        raise ValueError("eval needs --outcomes FILE, or --scores DIR with --labels FILE")
    report = evalkit.metrics(evalkit.confusion(outcomes, args.k))
    text = evalkit.render_report(report, outcomes)
    print(text, end="")
    out = args.out or cfg.out
    if out:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "outcomes.csv").write_bytes(evalkit.outcomes_to_csv(outcomes))
        (out / "report.csv").write_bytes(evalkit.report_to_csv(report))
        (out / "report.txt").write_text(text)
    return EXIT_OK


# -- argument parsing ----------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key=value config file")
    common.add_argument("--seed", type=int)
    common.add_argument("--mode", choices=[m.value for m in Mode])
    common.add_argument("--t-ae", dest="t_ae", type=float)
    common.add_argument("--t-lstm", dest="t_lstm", type=float)
    common.add_argument("--cooldown-s", dest="cooldown_s", type=int)
    common.add_argument("--period-ms", dest="period_ms", type=int)
    common.add_argument("--epochs", type=int)
    common.add_argument("--lr", type=float)
    common.add_argument("--out")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="telewatch", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("collect", parents=[common], help="record telemetry to CSV")
    p.add_argument("--duration", type=float, help="seconds to record (default: train_duration_s)")
    p.add_argument("--replay", help="copy samples from this CSV instead of probing the host")
    p.set_defaults(func=cmd_collect)

    p = sub.add_parser("synth", parents=[common], help="generate synthetic runs")
    p.add_argument("--suite", choices=["standard", "baseline"], default="standard")
    p.add_argument("--spec", help="JSON scenario file (overrides --suite)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", parents=[common], help="train both models on benign CSVs")
    p.add_argument("inputs", nargs="+")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("calibrate", parents=[common], help="set thresholds from benign CSVs")
    p.add_argument("bundle")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--percentile", type=float)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("detect", parents=[common], help="score CSV replays or the live host")
    p.add_argument("bundle")
    p.add_argument("inputs", nargs="*", help="telemetry CSVs (live probe when omitted)")
    p.add_argument("--duration", type=float, help="live probe seconds (default: detect_duration_s)")
    p.add_argument("--log-dir", help="write one score log per input into this directory")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("eval", parents=[common], help="confusion matrix and precision/recall/F1")
    p.add_argument("--outcomes", help="CSV run_id,label,warning_count")
    p.add_argument("--scores", help="directory of score logs named <run_id>.csv")
    p.add_argument("--labels", help="CSV run_id,label")
    p.add_argument("-k", type=int, default=1, help="warnings needed to call a run malicious")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = build_config(args)
        return args.func(args, cfg)
    except (TelewatchError, ValueError, OSError) as exc:
        print(f"telewatch {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
