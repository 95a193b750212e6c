import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.metrics import precision_recall_fscore_support

import published
from telewatch.errors import EmptyInput, MalformedRow
from telewatch.evalkit import (
    ConfusionMatrix,
    RunOutcome,
    classify_run,
    confusion,
    labels_to_csv,
    metrics,
    outcomes_to_csv,
    parse_labels_csv,
    parse_outcomes_csv,
    parse_report_csv,
    pct,
    render_metrics_table,
    render_report,
    render_runs_table,
    report_to_csv,
)
from telewatch.telemetry import Label


def test_classify_examples():
    assert classify_run(RunOutcome("ebay_sms", "malicious", 2)) is Label.MALICIOUS
    assert classify_run(RunOutcome("lock_your_phone", "malicious", 0)) is Label.BENIGN
    with pytest.raises(ValueError):
        classify_run(RunOutcome("x", "benign", 1), k=0)


def test_published_counts_confusion():
    # The published counts hold five nonzero malicious entries, so a recount
    # gives tp=5 although the published metrics assume six detections.
    assert confusion(published.outcomes()) == ConfusionMatrix(tp=5, fp=0, tn=10, fn=5)


def test_k3_flags_only_large_counts():
    flagged = [o.warning_count for o in published.outcomes() if classify_run(o, k=3) is Label.MALICIOUS]
    assert sorted(flagged) == [3, 5]
    assert confusion(published.outcomes(), k=3) == ConfusionMatrix(tp=2, fp=0, tn=10, fn=8)


def test_published_counts_counts_metrics():
    report = metrics(confusion(published.outcomes()))
    assert (pct(report.benign.precision), pct(report.malicious.recall), pct(report.macro.f1)) == ("66.7", "50.0", "73.3")


def test_published_metrics_reproduced():
    report = metrics(ConfusionMatrix(6, 0, 10, 4))
    for name, m in report.rows():
        assert (pct(m.precision), pct(m.recall), pct(m.f1)) == published.METRICS[name], name
    assert report.undefined == ()


def test_published_metrics_three_decimals():
    report = metrics(ConfusionMatrix(6, 0, 10, 4))
    got = [round(v, 3) for _, m in report.rows() for v in (m.precision, m.recall, m.f1)]
    assert got == [0.714, 1.0, 0.833, 1.0, 0.6, 0.75, 0.857, 0.8, 0.792]


def test_macro_f1_is_mean_of_class_f1s():
    report = metrics(ConfusionMatrix(6, 0, 10, 4))
    f1_of_means = 2 * report.macro.precision * report.macro.recall / (report.macro.precision + report.macro.recall)
    assert pct(report.macro.f1) == "79.2"
    assert pct(f1_of_means) != "79.2"


def test_perfect_matrix():
    report = metrics(ConfusionMatrix(10, 0, 10, 0))
    assert all(v == 1.0 for _, m in report.rows() for v in (m.precision, m.recall, m.f1))


def test_zero_over_zero_reported_as_zero():
    report = metrics(ConfusionMatrix(0, 0, 10, 0))
    assert report.malicious == type(report.malicious)(0.0, 0.0, 0.0)
    assert report.benign.precision == 1.0
    assert set(report.undefined) == {"malicious precision", "malicious recall"}
    assert "0/0" in render_metrics_table(report)


def test_empty_outcomes():
    with pytest.raises(EmptyInput):
        confusion([])


def test_outcome_validation():
    with pytest.raises(ValueError):
        RunOutcome("x", "unlabeled", 0)
    with pytest.raises(ValueError):
        RunOutcome("x", "benign", -1)


counts = st.integers(0, 50)


@settings(max_examples=200, deadline=None)
@given(counts, counts, counts, counts, st.integers(1, 20))
def test_metrics_scale_free_and_bounded(tp, fp, tn, fn, c):
    if tp + fp + tn + fn == 0:
        return
    a = metrics(ConfusionMatrix(tp, fp, tn, fn))
    b = metrics(ConfusionMatrix(c * tp, c * fp, c * tn, c * fn))
    for (_, ma), (_, mb) in zip(a.rows(), b.rows()):
        for x, y in ((ma.precision, mb.precision), (ma.recall, mb.recall), (ma.f1, mb.f1)):
            assert 0.0 <= x <= 1.0
            assert x == pytest.approx(y, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(counts, counts, counts, counts)
def test_matches_sklearn(tp, fp, tn, fn):
    if min(tp + fn, tn + fp) == 0:
        return
    y_true = [1] * (tp + fn) + [0] * (tn + fp)
    y_pred = [1] * tp + [0] * fn + [0] * tn + [1] * fp
    p, r, f, _ = precision_recall_fscore_support(y_true, y_pred, labels=[0, 1], zero_division=0)
    report = metrics(ConfusionMatrix(tp, fp, tn, fn))
    np.testing.assert_allclose([report.benign.precision, report.malicious.precision], p, atol=1e-12)
    np.testing.assert_allclose([report.benign.recall, report.malicious.recall], r, atol=1e-12)
    np.testing.assert_allclose([report.benign.f1, report.malicious.f1], f, atol=1e-12)
    assert report.macro.f1 == pytest.approx(f.mean(), abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.booleans(), counts), min_size=1, max_size=30), st.integers(1, 10))
def test_raising_k_never_adds_malicious_predictions(rows, k):
    outs = [RunOutcome(f"r{i}", "malicious" if m else "benign", c) for i, (m, c) in enumerate(rows)]
    lo, hi = confusion(outs, k), confusion(outs, k + 1)
    assert hi.tp + hi.fp <= lo.tp + lo.fp
    assert hi.total == lo.total == len(outs)


def test_render_runs_table():
    text = render_runs_table(published.outcomes())
    lines = text.splitlines()
    assert len(lines) == 11
    mal_counts = [int(line.split()[1]) for line in lines[1:]]
    assert mal_counts == [2, 3, 0, 5, 0, 0, 2, 1, 0, 0]
    assert all(line.split()[-1] == "0" for line in lines[1:])


def test_render_report_contains_published_metrics():
    text = render_report(metrics(ConfusionMatrix(6, 0, 10, 4)), published.outcomes())
    assert "79.2%" in text and "71.4%" in text and "Overall (macro-average)" in text


def test_report_csv_round_trip():
    report = metrics(ConfusionMatrix(6, 0, 10, 4))
    back = parse_report_csv(report_to_csv(report))
    assert back == dict(report.rows())
    assert report_to_csv(report).startswith(b"class,precision,recall,f1\n")


def test_outcomes_csv_round_trip():
    outs = published.outcomes()
    assert parse_outcomes_csv(outcomes_to_csv(outs)) == outs


def test_blank_count_reads_as_zero():
    outs = parse_outcomes_csv(published.outcomes_csv())
    assert outs == published.outcomes()


def test_labels_csv_round_trip():
    labels = {"a": Label.BENIGN, "b": Label.MALICIOUS}
    assert parse_labels_csv(labels_to_csv(labels)) == labels


@pytest.mark.parametrize(
    "data",
    [b"run,label\n", b"run_id,label,warning_count\nx,benign\n", b"run_id,label,warning_count\nx,evil,1\n", b"run_id,label,warning_count\nx,benign,two\n"],
)
def test_outcomes_malformed(data):
    with pytest.raises(MalformedRow):
        parse_outcomes_csv(data)
