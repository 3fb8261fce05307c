import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from impactnet.dataset import augment_shift
from impactnet.errors import FormatError, InvalidParameterError, SolverError
from impactnet.kinematics import LabelValue, ProcessedWindow, build_window
from impactnet.svm import (FEATURE_NAMES, N_FEATURES, PER_ROW, extract_features, feature_matrix,
                           kernel_matrix, parse_selection, parse_svm, predict_svm,
                           predict_svm_many, render_selection, render_svm,
                           sequential_forward_selection, solve_dual, stratified_folds, train_svm)

from conftest import half_sine, make_event, make_labeled
from qp_oracle import brute_force_dual, objective, random_instance


def col(row, feature):
    return row * len(PER_ROW) + PER_ROW.index(feature)


def two_informative(seed, n=80, d=10):
    """Labels depend on columns 2 and 7 (columns 0 and 1 when d < 8); the rest is noise."""
    rng = np.random.Generator(np.random.PCG64(seed))
    x = rng.normal(size=(n, d))
    i, j = (2, 7) if d >= 8 else (0, 1)
    y = np.where(x[:, i] + x[:, j] > 0, 1, -1)
    return x, y


# -- features ---------------------------------------------------------------

def test_feature_names_are_fixed():
    assert N_FEATURES == len(FEATURE_NAMES) == 50
    assert FEATURE_NAMES[:3] == ["lin_x_peak", "lin_x_time_to_peak_ms", "lin_x_integral"]
    assert FEATURE_NAMES[-2:] == ["lin_mag_peak", "ang_lin_energy_ratio"]


def test_zero_window_features():
    np.testing.assert_array_equal(extract_features(ProcessedWindow(np.zeros((6, 200)))), 0.0)


def test_half_sine_features():
    lin = np.zeros((3, 200))
    lin[0] = half_sine(200, 1000.0, 45.0, 10.0, 30.0)
    f = extract_features(build_window(make_event(lin=lin)))
    assert f[col(0, "peak")] == pytest.approx(30.0, rel=0.01)
    assert f[col(0, "time_to_peak_ms")] == 0.0
    # |sin| >= 1/2 over 2/3 of the pulse: 6.7 ms, i.e. 7 samples on the 1 ms grid
    assert abs(f[col(0, "above_half_ms")] - 20.0 / 3.0) <= 1.0
    assert f[col(0, "integral")] == pytest.approx(2 / np.pi * 30.0 * 0.010, rel=0.01)
    assert f[-2] == pytest.approx(30.0, rel=0.01)


def test_haversine_half_width():
    lin = np.zeros((3, 200))
    t = np.arange(200.0)
    x = (t - 45.0) / 10.0
    lin[0] = np.where((x >= 0) & (x <= 1), 30.0 * np.sin(np.pi * x) ** 2, 0.0)
    f = extract_features(build_window(make_event(lin=lin)))
    assert f[col(0, "above_half_ms")] == pytest.approx(5.0)


def test_200hz_band():
    data = np.zeros((6, 200))
    data[4] = np.sin(2 * np.pi * 200.0 * np.arange(200) / 1000.0 + 0.3)
    f = extract_features(ProcessedWindow(data))
    assert f[col(4, "band_100_300")] > 0.9
    bands = [f[col(4, b)] for b in ("band_0_100", "band_100_300", "band_300_500")]
    assert sum(bands) == pytest.approx(1.0)


def test_zero_crossings():
    data = np.zeros((6, 200))
    # signs + - (0) - + (0 0) + - +  -> zeros skipped, 4 changes
    data[1, 10:20] = [1, -1, 0, -1, 2, 0, 0, 3, -3, 1]
    assert extract_features(ProcessedWindow(data))[col(1, "zero_crossings")] == 4


@pytest.mark.parametrize("shift", [1, 2, 3, 4, 5])
def test_shift_covariance_per_feature(small_labeled, shift):
    ev = small_labeled[0]
    data = ev.window.data.copy()
    data[:, -5:] = 0.0  # nothing falls off the end, so the shift is circular
    ev = make_labeled("s", data, split="train")
    before = extract_features(ev.window)
    after = extract_features(augment_shift(ev, shift).window)
    for i, name in enumerate(FEATURE_NAMES):
        if name.endswith("time_to_peak_ms") and before[col(i // 8, "peak")] > 0:
            assert after[i] == pytest.approx(before[i] + shift), name
        else:
            assert after[i] == pytest.approx(before[i], rel=1e-9, abs=1e-12), name


@pytest.mark.parametrize("shift", [1, 3, 5])
def test_shift_keeps_peak_moves_time_to_peak(small_labeled, shift):
    for ev in small_labeled[:10]:
        ev = make_labeled(ev.event_id, ev.window.data, split="train")
        before = extract_features(ev.window)
        after = extract_features(augment_shift(ev, shift).window)
        for r in range(6):
            row = ev.window.data[r]
            if np.argmax(np.abs(row)) < 200 - shift and np.abs(row).max() > 0:
                assert after[col(r, "peak")] == before[col(r, "peak")]
                assert after[col(r, "time_to_peak_ms")] == before[col(r, "time_to_peak_ms")] + shift


def test_feature_matrix(small_labeled):
    m = feature_matrix([e.window for e in small_labeled[:5]])
    assert m.shape == (5, 50) and np.all(np.isfinite(m))


# -- solver vs brute-force QP -----------------------------------------------

@pytest.mark.parametrize("seed", range(40))
def test_smo_matches_brute_force(seed):
    x, y, kernel, c, gamma = random_instance(np.random.Generator(np.random.PCG64(seed)))
    k = kernel_matrix(x, x, kernel, gamma)
    sol = solve_dual(k, y, c)
    best, _ = brute_force_dual(k, y, c)
    assert abs(sol.objective - best) <= 1e-6
    assert objective(sol.alpha, y, k) == pytest.approx(sol.objective, abs=1e-12)


def test_two_point_margin():
    x = np.array([[-1.0, 0.0], [1.0, 0.0]])
    model = train_svm(x, [-1, 1], kernel="linear", c=1e6)
    w = model.dual_coef @ model.support_vectors
    np.testing.assert_allclose(w, [1.0, 0.0], atol=1e-3)
    assert 2.0 / np.linalg.norm(w) == pytest.approx(2.0, abs=1e-3)
    boundary = np.array([[0.0, -3.0], [0.0, 0.0], [0.0, 5.0]])
    np.testing.assert_allclose(model.decision_function(boundary), 0.0, atol=1e-3)
    np.testing.assert_allclose(model.decision_function(x), [-1.0, 1.0], atol=1e-3)


def test_identical_features_are_degenerate():
    x = np.ones((6, 3))
    y = [1, 1, 1, -1, -1, -1]
    model = train_svm(x, y)
    assert model.degenerate
    pred = [lab for lab, _ in predict_svm_many(model, x)]
    acc = np.mean([(p is LabelValue.TRUE_IMPACT) == (t > 0) for p, t in zip(pred, y)])
    assert acc == 0.5


def test_xor_rbf():
    x = np.array([[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]])
    y = [1, 1, -1, -1]
    model = train_svm(x, y, kernel="rbf", c=10.0, gamma=1.0)
    d = model.decision_function(x)
    assert np.all(np.sign(d) == y)


@given(st.integers(0, 2 ** 32 - 1))
def test_dual_feasibility(seed):
    rng = np.random.Generator(np.random.PCG64(seed))
    n = int(rng.integers(4, 40))
    x = rng.normal(size=(n, 3))
    y = np.where(x[:, 0] + rng.normal(0, 0.5, n) > 0, 1.0, -1.0)
    y[0], y[1] = 1.0, -1.0
    c = float(rng.choice([0.5, 1.0, 5.0]))
    sol = solve_dual(kernel_matrix(x, x, "rbf", 0.5), y, c)
    assert np.all(sol.alpha >= 0) and np.all(sol.alpha <= c)
    assert abs(sol.alpha @ y) < 1e-9
    assert sol.gap < 1e-3


def test_label_swap_antisymmetry():
    x, y = two_informative(3, n=40, d=4)
    a = train_svm(x, y)
    b = train_svm(x, -y)
    probe = np.random.Generator(np.random.PCG64(4)).normal(size=(25, 4))
    np.testing.assert_allclose(b.decision_function(probe), -a.decision_function(probe), atol=1e-6)


def test_support_vectors_get_their_labels():
    x, y = two_informative(5, n=40, d=3)
    x[:, 2] += 3.0 * (x[:, 2] + x[:, 0])  # irrelevant: just varied geometry
    x = np.column_stack([x[:, :2], 2.0 * y + x[:, 2] * 0.01])
    model = train_svm(x, y, kernel="linear", c=100.0)
    sv_idx = np.flatnonzero(model.alpha > 0)
    labels = [lab for lab, _ in predict_svm_many(model, x[sv_idx])]
    assert [1 if lab is LabelValue.TRUE_IMPACT else -1 for lab in labels] == list(y[sv_idx])


def test_standardization_happens_before_kernel():
    x, y = two_informative(6, n=50, d=4)
    model = train_svm(x, y)
    np.testing.assert_allclose(model.prepare(x), (x - x.mean(0)) / x.std(0))
    scaled = x * np.array([1000.0, 1e-3, 1.0, 7.0])
    model2 = train_svm(scaled, y)
    np.testing.assert_allclose(model2.decision_function(scaled), model.decision_function(x),
                               atol=1e-8)


def test_zero_decision_is_noncontact():
    x = np.ones((4, 2))
    model = train_svm(x, [1, -1, 1, -1])
    model.bias = 0.0
    model.dual_coef = np.zeros_like(model.dual_coef)
    assert predict_svm(model, x[0]) == (LabelValue.NON_CONTACT, 0.0)


def test_non_convergence_reports_diagnostics():
    x, y = two_informative(7, n=60, d=4)
    with pytest.raises(SolverError) as info:
        train_svm(x, y, max_iter=1)
    assert info.value.diagnostics["iterations"] == 1 and "gap" in info.value.diagnostics


def test_single_class_rejected():
    with pytest.raises(InvalidParameterError):
        train_svm(np.zeros((3, 2)), [1, 1, 1])


# -- selection -------------------------------------------------------------

def test_selection_single_separating_feature():
    rng = np.random.Generator(np.random.PCG64(0))
    x = rng.normal(size=(60, 6))
    y = np.where(np.arange(60) < 30, 1, -1)
    x[:, 3] = y * (1.0 + rng.uniform(0, 1, 60))
    res = sequential_forward_selection(x, y, seed=1)
    assert res.selected == (3,)
    assert res.cv_error == 0.0 and len(res.trace) == 1


@pytest.mark.parametrize("seed", range(5))
def test_selection_recovers_informative_pair(seed):
    x, y = two_informative(seed)
    res = sequential_forward_selection(x, y, seed=seed)
    assert set(res.selected[:2]) == {2, 7}


def test_selection_trace_is_strictly_decreasing():
    x, y = two_informative(11)
    res = sequential_forward_selection(x, y, seed=3)
    errors = [res.baseline_error] + [s.cv_error for s in res.trace]
    assert all(b < a for a, b in zip(errors, errors[1:]))
    if res.rejected is not None:
        assert res.rejected.cv_error >= errors[-1]


def test_selection_is_deterministic():
    x, y = two_informative(2, n=40, d=5)
    a = sequential_forward_selection(x, y, seed=9)
    b = sequential_forward_selection(x, y, seed=9)
    assert a.selected == b.selected and a.trace == b.trace


def test_selection_max_features():
    x, y = two_informative(1)
    assert len(sequential_forward_selection(x, y, max_features=1).selected) == 1
    with pytest.raises(InvalidParameterError):
        sequential_forward_selection(x, y, max_features=0)


def test_selection_needs_k_per_class():
    x = np.random.Generator(np.random.PCG64(0)).normal(size=(10, 3))
    y = [1, 1, 1, 1] + [-1] * 6
    with pytest.raises(InvalidParameterError):
        sequential_forward_selection(x, y, k_folds=5)


def test_folds_are_stratified():
    y = np.array([1.0] * 12 + [-1.0] * 23)
    folds = stratified_folds(y, 5, seed=0)
    for f in range(5):
        assert (y[folds == f] > 0).sum() in (2, 3)
        assert (y[folds == f] < 0).sum() in (4, 5)


# -- persistence -----------------------------------------------------------

def test_model_round_trip(tmp_path):
    x, y = two_informative(4, n=40, d=5)
    model = train_svm(x, y, feature_mask=[1, 2, 4], train_ids=["b", "a"])
    text = render_svm(model)
    back = parse_svm(text)
    assert render_svm(back) == text
    np.testing.assert_array_equal(back.decision_function(x), model.decision_function(x))
    assert back.feature_mask == (1, 2, 4) and back.train_ids == {"a", "b"}


@pytest.mark.parametrize("mutate", [
    lambda t: t.replace("svm-model/1", "svm-model/0"),
    lambda t: t.replace("kernel=rbf", "kernel=poly"),
    lambda t: t.rsplit("end", 1)[0],
    lambda t: t.replace("mask=1,2,4", "mask=1,2"),
    lambda t: t.replace("C=1.0", "C=abc"),
])
def test_corrupt_model_file(mutate):
    x, y = two_informative(4, n=40, d=5)
    text = render_svm(train_svm(x, y, feature_mask=[1, 2, 4]))
    with pytest.raises(FormatError):
        parse_svm(mutate(text))


def test_selection_round_trip():
    x, y = two_informative(8, n=50, d=4)
    res = sequential_forward_selection(x, y, seed=2)
    back = parse_selection(render_selection(res))
    assert back.selected == res.selected and back.trace == res.trace
    assert back.baseline_error == res.baseline_error and back.seed == 2
    with pytest.raises(FormatError):
        parse_selection(render_selection(res).replace("features=", "features=9,"))
