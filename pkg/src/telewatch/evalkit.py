"""Run-level evaluation: warning counts -> confusion matrix -> precision/recall/F1.

Malicious is the positive class. Benign metrics are computed symmetrically
(true negatives play the role of that class's true positives) and the macro
row is the unweighted mean of the two classes, F1 included.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .errors import EmptyInput, MalformedRow
from .telemetry import Label

OUTCOMES_HEADER = "run_id,label,warning_count"
REPORT_HEADER = "class,precision,recall,f1"


@dataclass(frozen=True)
class RunOutcome:
    run_id: str
    true_label: Label
    warning_count: int

    def __post_init__(self):
        object.__setattr__(self, "true_label", Label(self.true_label))
        if self.true_label is Label.UNLABELED:
            raise ValueError(f"run {self.run_id!r} has no ground-truth label")
        if self.warning_count < 0:
            raise ValueError(f"run {self.run_id!r}: negative warning count")


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class MetricsReport:
    benign: ClassMetrics
    malicious: ClassMetrics
    macro: ClassMetrics
    # ratios that were 0/0 and therefore reported as 0
    undefined: tuple = field(default_factory=tuple)

    def rows(self):
        return [("benign", self.benign), ("malicious", self.malicious), ("macro", self.macro)]


def classify_run(outcome: RunOutcome, k: int = 1) -> Label:
    if k < 1:
        raise ValueError(f"warning threshold k must be >= 1, got {k}")
    return Label.MALICIOUS if outcome.warning_count >= k else Label.BENIGN


def confusion(outcomes: Iterable[RunOutcome], k: int = 1) -> ConfusionMatrix:
    tp = fp = tn = fn = 0
    n = 0
    for outcome in outcomes:
        n += 1
        predicted = classify_run(outcome, k)
        if outcome.true_label is Label.MALICIOUS:
            if predicted is Label.MALICIOUS:
                tp += 1
            else:
                fn += 1
        elif predicted is Label.MALICIOUS:
            fp += 1
        else:
            tn += 1
    if n == 0:
        raise EmptyInput("no run outcomes to evaluate")
    return ConfusionMatrix(tp, fp, tn, fn)


def _ratio(num, den, name, undefined):
    if den == 0:
        undefined.append(name)
        return 0.0
    return num / den


def _class_metrics(hit, false_alarm, miss, name, undefined):
    p = _ratio(hit, hit + false_alarm, f"{name} precision", undefined)
    r = _ratio(hit, hit + miss, f"{name} recall", undefined)
    f1 = 0.0 if p + r == 0 else 2 * p * r / (p + r)
    return ClassMetrics(p, r, f1)


def metrics(cm: ConfusionMatrix) -> MetricsReport:
    undefined = []
    malicious = _class_metrics(cm.tp, cm.fp, cm.fn, "malicious", undefined)
    benign = _class_metrics(cm.tn, cm.fn, cm.fp, "benign", undefined)
    macro = ClassMetrics(
        (benign.precision + malicious.precision) / 2,
        (benign.recall + malicious.recall) / 2,
        (benign.f1 + malicious.f1) / 2,
    )
    return MetricsReport(benign, malicious, macro, tuple(undefined))


def pct(x: float) -> str:
    return f"{100 * x:.1f}"


def render_runs_table(outcomes: Sequence[RunOutcome]) -> str:
    """Side-by-side malicious / benign warning counts, one run per row."""
    mal = [o for o in outcomes if o.true_label is Label.MALICIOUS]
    ben = [o for o in outcomes if o.true_label is Label.BENIGN]
    width = max([len(o.run_id) for o in outcomes] + [14])
    lines = [f"{'Malicious run':<{width}}  Warnings  {'Benign run':<{width}}  Warnings"]
    for i in range(max(len(mal), len(ben))):
        left = f"{mal[i].run_id:<{width}}  {mal[i].warning_count:>8}" if i < len(mal) else " " * (width + 10)
        right = f"{ben[i].run_id:<{width}}  {ben[i].warning_count:>8}" if i < len(ben) else ""
        lines.append(f"{left}  {right}".rstrip())
    return "\n".join(lines)


def render_metrics_table(report: MetricsReport) -> str:
    names = {"benign": "Benign", "malicious": "Malicious", "macro": "Overall (macro-average)"}
    lines = [f"{'':<24} {'Precision':>9} {'Recall':>7} {'F1':>7}"]
    for key, m in report.rows():
        lines.append(f"{names[key]:<24} {pct(m.precision):>8}% {pct(m.recall):>6}% {pct(m.f1):>6}%")
    if report.undefined:
        lines.append("note: 0/0 reported as 0 for " + ", ".join(report.undefined))
    return "\n".join(lines)


def render_report(report: MetricsReport, outcomes: Sequence[RunOutcome]) -> str:
    return render_runs_table(outcomes) + "\n\n" + render_metrics_table(report) + "\n"


def report_to_csv(report: MetricsReport) -> bytes:
    lines = [REPORT_HEADER]
    for key, m in report.rows():
        lines.append(f"{key},{m.precision!r},{m.recall!r},{m.f1!r}")
    return ("\n".join(lines) + "\n").encode("utf-8")


def parse_report_csv(data: bytes) -> dict[str, ClassMetrics]:
    rows = _read_rows(data, REPORT_HEADER, 4)
    try:
        return {r[0]: ClassMetrics(float(r[1]), float(r[2]), float(r[3])) for r in rows}
    except ValueError as exc:
        raise MalformedRow(f"bad report value: {exc}") from None


def outcomes_to_csv(outcomes: Iterable[RunOutcome]) -> bytes:
    lines = [OUTCOMES_HEADER]
    lines += [f"{o.run_id},{o.true_label.value},{o.warning_count}" for o in outcomes]
    return ("\n".join(lines) + "\n").encode("utf-8")


def parse_outcomes_csv(data: bytes) -> list[RunOutcome]:
    outcomes = []
    for r in _read_rows(data, OUTCOMES_HEADER, 3):
        try:
            # a blank count cell is read as zero warnings
            outcomes.append(RunOutcome(r[0], Label(r[1]), int(r[2]) if r[2].strip() else 0))
        except ValueError as exc:
            raise MalformedRow(f"bad outcome row {r!r}: {exc}") from None
    return outcomes


def parse_labels_csv(data: bytes) -> dict[str, Label]:
    try:
        return {r[0]: Label(r[1]) for r in _read_rows(data, "run_id,label", 2)}
    except ValueError as exc:
        raise MalformedRow(f"bad label: {exc}") from None


def labels_to_csv(labels: dict) -> bytes:
    lines = ["run_id,label"] + [f"{k},{Label(v).value}" for k, v in labels.items()]
    return ("\n".join(lines) + "\n").encode("utf-8")


def _read_rows(data: bytes, header: str, ncols: int) -> list[list[str]]:
    reader = csv.reader(io.StringIO(data.decode("utf-8"), newline=""))
    first = next(reader, None)
    if first is None or ",".join(first) != header:
        raise MalformedRow(f"bad header {first!r}, expected {header!r}")
    rows = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != ncols:
            raise MalformedRow(f"line {lineno}: expected {ncols} columns, got {len(row)}")
        rows.append(row)
    return rows
