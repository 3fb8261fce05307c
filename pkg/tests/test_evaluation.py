import pathlib
import re
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from impactnet.errors import ContaminationError, FormatError, InvalidParameterError
from impactnet.evaluation import (REFERENCE_ROWS, REFERENCE_TEST_SPLIT, ConfusionMatrix, EvalReport, check_report_rows,
                                  consistent_matrices, evaluate, metrics, parse_report,
                                  render_report, render_table)
from impactnet.kinematics import LabelValue
from impactnet.sim import SanityRule

from conftest import make_labeled

matrices = st.builds(ConfusionMatrix, st.integers(0, 500), st.integers(0, 500),
                     st.integers(0, 500), st.integers(0, 500))


def exact_metrics(m):
    def frac(a, b):
        return Fraction(a, b) if b else None
    return (frac(m.tp, m.tp + m.fn), frac(m.tn, m.tn + m.fp),
            frac(m.tp + m.tn, m.total), frac(m.tp, m.tp + m.fp))


def pct(f):
    # half-up rounding of an exact fraction
    return int(Fraction(100) * f + Fraction(1, 2))


# -- metrics ---------------------------------------------------------------

def test_perfect_classifier():
    assert metrics(ConfusionMatrix(65, 0, 0, 100)).as_tuple() == (1.0, 1.0, 1.0, 1.0)


@pytest.mark.parametrize("cells, expected, row", [
    ((56, 9, 6, 94), (0.862, 0.940, 0.909, 0.903), (86, 94, 91, 90)),
    ((63, 2, 10, 90), (0.969, 0.900, 0.927, 0.863), (97, 90, 93, 86)),
])
def test_reference_rows(cells, expected, row):
    m = ConfusionMatrix(*cells)
    got = metrics(m)
    np.testing.assert_allclose(got.as_tuple(), expected, atol=5e-4)
    assert got.percent() == row
    assert tuple(pct(f) for f in exact_metrics(m)) == row
    assert got.as_tuple() == tuple(float(f) for f in exact_metrics(m))


def test_all_zero_matrix_is_undefined():
    m = metrics(ConfusionMatrix(0, 0, 0, 0))
    assert m.as_tuple() == (None, None, None, None)
    assert m.percent() == (None, None, None, None)


def test_partial_undefined():
    m = metrics(ConfusionMatrix(0, 0, 3, 7))
    assert m.sensitivity is None and m.precision == 0.0 and m.specificity == 0.7


@pytest.mark.parametrize("cells", [(-1, 0, 0, 0), (1.5, 0, 0, 0), (True, 0, 0, 0)])
def test_matrix_validation(cells):
    with pytest.raises(InvalidParameterError):
        ConfusionMatrix(*cells)


@given(matrices, st.integers(1, 50))
def test_metrics_are_scale_free(m, k):
    assert metrics(m.scaled(k)) == metrics(m)


@given(matrices)
def test_complements(m):
    got = metrics(m)
    if m.tp + m.fn:
        assert got.sensitivity + m.fn / (m.tp + m.fn) == pytest.approx(1.0, abs=1e-15)
    if m.tn + m.fp:
        assert got.specificity + m.fp / (m.tn + m.fp) == pytest.approx(1.0, abs=1e-15)


@given(matrices)
def test_metrics_match_exact_arithmetic(m):
    for got, exact in zip(metrics(m).as_tuple(), exact_metrics(m)):
        assert (got is None) == (exact is None)
        if exact is not None:
            assert got == float(exact)


def test_from_labels():
    t = [LabelValue.TRUE_IMPACT] * 3 + [LabelValue.NON_CONTACT] * 2
    p = [LabelValue.TRUE_IMPACT, LabelValue.NON_CONTACT, LabelValue.TRUE_IMPACT,
         LabelValue.TRUE_IMPACT, LabelValue.NON_CONTACT]
    assert ConfusionMatrix.from_labels(t, p) == ConfusionMatrix(2, 1, 1, 1)


# -- reports ---------------------------------------------------------------

def sample_report(**kw):
    base = dict(model_id="abc123", dataset_id="d42", seed=7, timestamp="2024-01-02T03:04:05Z",
                test_name="Test 1", model_name="MiGNet")
    base.update(kw)
    return EvalReport.from_matrix(ConfusionMatrix(63, 2, 10, 90), **base)


def test_report_round_trip():
    reports = [sample_report(), EvalReport.from_matrix(ConfusionMatrix(0, 0, 0, 4), seed=1),
               sample_report(model_name="SVM", dataset_size=512)]
    back = parse_report(render_report(reports))
    assert back == reports
    assert render_report(back) == render_report(reports)


@given(matrices, st.integers(0, 2 ** 31))
def test_report_round_trip_property(m, seed):
    r = EvalReport.from_matrix(m, seed=seed, model_id="m", dataset_id="d")
    assert parse_report(render_report(r)) == [r]


def test_table_layout():
    text = render_table([sample_report(), EvalReport.from_matrix(ConfusionMatrix(0, 0, 0, 5))])
    lines = [re.split(r"\s{2,}", line) for line in text.splitlines()]
    assert lines[0] == ["Test", "Model", "Sensitivity", "Specificity", "Accuracy",
                                    "Precision", "Dataset size"]
    assert lines[1] == ["Test 1", "MiGNet", "97%", "90%", "93%", "86%", "165"]
    assert "undefined" in lines[2]


def test_tampered_report_is_detected():
    text = render_report(sample_report()).replace("tp=63", "tp=62")
    with pytest.raises(FormatError):
        parse_report(text)


def test_recomputation_check():
    r = sample_report()
    assert r.is_consistent()
    fake = EvalReport(r.matrix, 0.5, r.specificity, r.accuracy, r.precision)
    assert not fake.is_consistent()


# -- evaluate --------------------------------------------------------------

def test_rule_classifier_is_perfect(small_sim, small_labeled):
    rule = SanityRule()
    by_id = {ev.event_id: rule(ev) for ev, _ in small_sim}
    test = [e.__class__(e.event_id, e.window, e.label, "test") for e in small_labeled]
    lookup = {id(e.window): by_id[e.event_id] for e in test}
    report = evaluate(lambda w: lookup[id(w)], test, timestamp="t", model_id="rule")
    assert report.accuracy == 1.0
    assert report.is_consistent()
    again = evaluate(lambda w: lookup[id(w)], test, timestamp="t", model_id="rule")
    assert render_report(report) == render_report(again)


def test_evaluate_rejects_training_events():
    ev = make_labeled("a", np.zeros((6, 200)), split="test")
    with pytest.raises(ContaminationError):
        evaluate(lambda w: LabelValue.NON_CONTACT, [ev], train_ids={"a"})
    with pytest.raises(ContaminationError):
        evaluate(lambda w: LabelValue.NON_CONTACT, [make_labeled("b", np.zeros((6, 200)),
                                                                 split="train")])


def test_evaluate_uses_model_train_ids():
    from impactnet.mignet import zero_model

    model = zero_model()
    model.train_ids = frozenset({"a"})
    with pytest.raises(ContaminationError):
        evaluate(model, [make_labeled("a", np.zeros((6, 200)), split="test")])


# -- reference-row consistency ---------------------------------------------

def test_test1_rows_have_unique_matrices():
    for ref, cells in zip(REFERENCE_ROWS[:2], [(56, 9, 6, 94), (63, 2, 10, 90)]):
        res = consistent_matrices(ref.percent, 65, 100)
        assert [tuple(vars(m).values()) for m in res.matrices] == [cells]


def test_test2_row_inconsistent_on_165():
    assert not consistent_matrices((76, 99, 96, 86), 65, 100).consistent
    assert not consistent_matrices((76, 99, 96, 86), total=165).consistent


def test_test2_row_on_512_events():
    res = consistent_matrices((76, 99, 96, 86), total=512)
    assert res.consistent
    for m in res.matrices:
        assert m.total == 512
        assert metrics(m).percent() == (76, 99, 96, 86)
    assert ConfusionMatrix(38, 12, 6, 456) in res.matrices


def test_check_report_rows_flags_impossible_row():
    good = sample_report()
    bad = EvalReport(ConfusionMatrix(49, 16, 1, 99), 0.76, 0.99, 0.96, 0.86)
    assert [ok for _, ok in check_report_rows([good, bad])] == [True, False]


# -- published reference values ----------------------------------------------

SOURCE_DOC = pathlib.Path(__file__).resolve().parents[1] / "paper.md"


def published_table():
    """Columns of the tab-separated results table, keyed by (test, model)."""
    lines = SOURCE_DOC.read_text(encoding="utf-8").splitlines()
    start = next(i for i, line in enumerate(lines) if line.startswith("\tTest 1 - SVM"))
    heads = [tuple(h.split(" - ")) for h in lines[start].split("\t")[1:]]
    rows = {}
    for line in lines[start + 1:start + 6]:
        name, *cells = line.split("\t")
        rows[name] = [int(c.rstrip("%")) for c in cells]
    return {h: {k: v[i] for k, v in rows.items()} for i, h in enumerate(heads)}


@pytest.mark.skipif(not SOURCE_DOC.exists(), reason="source document not present")
def test_reference_rows_match_published_table():
    table = published_table()
    assert len(table) == len(REFERENCE_ROWS)
    for ref in REFERENCE_ROWS:
        col = table[(ref.test_name, ref.model_name)]
        assert ref.percent == (col["Sensitivity"], col["Specificity"], col["Accuracy"],
                               col["Precision"])
        assert ref.dataset_size == col["Dataset size"]
    text = SOURCE_DOC.read_text(encoding="utf-8")
    n_pos, n_neg = REFERENCE_TEST_SPLIT
    assert f"{n_pos} impacts and {n_neg} non impacts" in text
