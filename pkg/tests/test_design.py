import numpy as np
import pytest

from parse_effort.design import (
    DesignConfig,
    HrfParams,
    PredictorSeries,
    WordEvent,
    build_design,
    convolve_resample,
    correlation_screen,
    hrf_kernel,
    impulses_from_events,
    orthogonalize,
    read_covariate,
    read_events,
    zscore_per_run,
)
from parse_effort.errors import (
    CollinearityError,
    EmptyKernel,
    InputError,
    InvalidParams,
    LengthMismatch,
    RankDeficientBasis,
    ZeroVariance,
)

from oracles import double_gamma, naive_convolve

GRID = 50.0


def impulse(t, amp=1.0):
    return PredictorSeries("x", "impulse", [t], [amp])


@pytest.fixture(scope="module")
def kernel():
    return hrf_kernel(HrfParams(), 1.0 / GRID)


@pytest.fixture(scope="module")
def oracle_peak():
    t = np.arange(0, 32.0 + 1e-9, 1.0 / GRID)
    return max(double_gamma(float(x)) for x in t)


# -- impulses ----------------------------------------------------------------


def events3():
    return [WordEvent("Mary", 0.1, 0.4, 1), WordEvent("reads", 0.45, 0.8, 1), WordEvent("papers", 0.9, 1.5, 1)]


def test_wordrate_impulses():
    s = impulses_from_events(events3())
    assert s.kind == "impulse"
    assert list(s.times) == [0.4, 0.8, 1.5]
    assert list(s.values) == [1.0, 1.0, 1.0]


def test_valued_impulses():
    assert list(impulses_from_events(events3(), [2, 2, 3]).values) == [2.0, 2.0, 3.0]


def test_empty_events():
    s = impulses_from_events([])
    assert s.times.size == 0 and s.values.size == 0


def test_impulse_length_mismatch():
    with pytest.raises(LengthMismatch):
        impulses_from_events(events3(), [1, 2])


def test_event_invariant():
    with pytest.raises(InputError):
        WordEvent("x", 1.0, 1.0, 1)


# -- kernel ------------------------------------------------------------------


def test_kernel_peak_location():
    k = hrf_kernel(HrfParams(), 0.1)
    dense = np.arange(0, 32, 0.001)
    oracle = dense[np.argmax([double_gamma(float(t)) for t in dense])]
    assert abs(oracle - 5.0) < 0.05
    assert abs(np.argmax(k) * 0.1 - oracle) <= 0.05 + 1e-12


def test_kernel_zero_at_origin_and_unit_max(kernel):
    assert kernel[0] == 0.0
    assert kernel.max() == 1.0
    assert len(kernel) == 32 * 50 + 1


def test_kernel_matches_direct_evaluation(kernel, oracle_peak):
    t = np.arange(len(kernel)) / GRID
    direct = np.array([double_gamma(float(x)) for x in t]) / oracle_peak
    assert np.max(np.abs(kernel - direct)) < 1e-12


@pytest.mark.parametrize(
    "params, dt",
    [
        (HrfParams(), 0.0),
        (HrfParams(duration=20.0), 0.1),
        (HrfParams(peak_delay=-1.0), 0.1),
        (HrfParams(peak_undershoot_ratio=0.0), 0.1),
    ],
)
def test_kernel_invalid(params, dt):
    with pytest.raises(InvalidParams):
        hrf_kernel(params, dt)


# -- convolution ---------------------------------------------------------------


def test_single_impulse_matches_brute_force(kernel):
    n_scans = 40
    out = convolve_resample(impulse(10.0), kernel, n_scans)
    x = [0.0] * (n_scans * 100)
    x[500] = 1.0
    full = naive_convolve(x, list(kernel))[: n_scans * 100]
    expected = np.array(full[::100])
    assert np.max(np.abs(out.values - expected)) < 1e-9
    assert list(out.times) == [2.0 * k for k in range(n_scans)]


def test_resampling_equals_direct_evaluation(kernel, oracle_peak):
    n_scans = 40
    out = convolve_resample(impulse(10.0), kernel, n_scans).values
    for k in range(n_scans):
        lag = 2.0 * k - 10.0
        want = double_gamma(lag) / oracle_peak if 0 <= lag <= 32.0 else 0.0
        assert abs(out[k] - want) < 1e-9


def test_zero_series(kernel):
    out = convolve_resample(PredictorSeries("z", "impulse", [], []), kernel, 20)
    assert np.all(out.values == 0.0)


def test_superposition_and_shift(kernel):
    a = convolve_resample(impulse(10.0, 2.0), kernel, 60).values
    b = convolve_resample(impulse(23.4, -0.5), kernel, 60).values
    both = convolve_resample(PredictorSeries("x", "impulse", [10.0, 23.4], [2.0, -0.5]), kernel, 60).values
    assert np.max(np.abs(both - (a + b))) < 1e-9
    shifted = convolve_resample(impulse(14.0, 2.0), kernel, 60).values
    assert np.max(np.abs(shifted[2:] - a[:-2])) < 1e-9


def test_continuous_series_integrates(kernel):
    # a constant input reaches the Riemann sum of the kernel once it has filled
    series = PredictorSeries("c", "continuous", np.arange(0, 200, 0.1), np.ones(2000))
    out = convolve_resample(series, kernel, 100).values
    assert out[50] == pytest.approx(kernel.sum() / GRID, rel=1e-12)


def test_empty_kernel():
    with pytest.raises(EmptyKernel):
        convolve_resample(impulse(1.0), np.array([]), 10)


def test_rate_mismatch(kernel):
    with pytest.raises(InvalidParams):
        convolve_resample(impulse(1.0), kernel, 10, out_rate=0.3)


# -- z-scoring -----------------------------------------------------------------


def test_zscore_two_points():
    np.testing.assert_allclose(zscore_per_run([1.0, 3.0], [2]), [-0.70710678, 0.70710678], atol=1e-8)
    np.testing.assert_allclose(zscore_per_run([1.0, 3.0], [2], ddof=0), [-1.0, 1.0])


def test_zscore_constant_run():
    with pytest.raises(ZeroVariance):
        zscore_per_run([1.0, 2.0, 5.0, 5.0, 5.0], [2, 3])


def test_zscore_runs_independent():
    rng = np.random.default_rng(0)
    x = np.concatenate([rng.normal(5, 2, 30), rng.normal(-3, 0.1, 50)])
    z = zscore_per_run(x, [30, 50])
    for seg in (z[:30], z[30:]):
        assert abs(seg.mean()) < 1e-12
        assert seg.std(ddof=1) == pytest.approx(1.0, abs=1e-12)


def test_zscore_length_mismatch():
    with pytest.raises(LengthMismatch):
        zscore_per_run([1.0, 2.0, 3.0], [2])


# -- orthogonalization -----------------------------------------------------------


@pytest.fixture
def basis():
    rng = np.random.default_rng(1)
    w = rng.standard_normal(200).cumsum()
    return np.column_stack([w, np.ones(200)])


def test_target_in_span(basis):
    assert np.linalg.norm(orthogonalize(basis[:, 0], basis)) < 1e-10


def test_already_orthogonal_unchanged(basis):
    rng = np.random.default_rng(2)
    y = rng.standard_normal(200)
    # make y exactly orthogonal using the normal equations
    B = basis
    y = y - B @ np.linalg.solve(B.T @ B, B.T @ y)
    assert np.max(np.abs(orthogonalize(y, basis) - y)) < 1e-12


def test_residual_orthogonal_to_basis(basis):
    rng = np.random.default_rng(3)
    for _ in range(20):
        y = rng.standard_normal(200) * 5 + basis[:, 0] * rng.normal()
        r = orthogonalize(y, basis)
        oracle = y - basis @ np.linalg.solve(basis.T @ basis, basis.T @ y)
        assert np.max(np.abs(r - oracle)) < 1e-8
        assert np.max(np.abs(basis.T @ r)) < 1e-10
        assert abs(np.corrcoef(r, basis[:, 0])[0, 1]) < 1e-10


def test_orthogonalize_idempotent(basis):
    y = np.sin(np.arange(200) / 7.0)
    once = orthogonalize(y, basis)
    assert np.max(np.abs(orthogonalize(once, basis) - once)) < 1e-12


def test_rank_deficient_basis(basis):
    with pytest.raises(RankDeficientBasis):
        orthogonalize(basis[:, 0], np.column_stack([basis, 2 * basis[:, 0]]))


# -- correlation screen ------------------------------------------------------------


def test_duplicate_column_flagged_and_one_dropped():
    rng = np.random.default_rng(4)
    a = rng.standard_normal(100)
    res = correlation_screen({"cfg_topdown": a, "cfg_leftcorner": a.copy(), "other": rng.standard_normal(100)})
    assert res.r.shape == (3, 3)
    assert np.allclose(res.r, res.r.T)
    assert np.all(np.diag(res.r) == 1.0)
    assert [(x, y) for x, y, _ in res.flagged] == [("cfg_topdown", "cfg_leftcorner")]
    assert res.flagged[0][2] == pytest.approx(1.0, abs=1e-12)
    assert res.drop == ["cfg_leftcorner"]


def test_screen_priority_order():
    a = np.arange(50.0)
    res = correlation_screen({"a": a, "b": a * 2 + 1}, priority=["b", "a"])
    assert res.drop == ["a"]


def test_screen_unlisted_pair_unresolved():
    a = np.arange(50.0)
    res = correlation_screen({"a": a, "b": a + 1, "c": np.sin(a)}, priority=["c"])
    assert res.drop == [] and len(res.unresolved) == 1


def test_screen_residual_not_flagged(basis):
    r = orthogonalize(np.cos(np.arange(200) / 3.0), basis)
    res = correlation_screen({"w": basis[:, 0], "r": r})
    assert abs(res.r[0, 1]) < 1e-8
    assert res.flagged == []


def test_screen_zero_variance():
    with pytest.raises(ZeroVariance):
        correlation_screen({"a": np.ones(10), "b": np.arange(10.0)})


# -- assembly ----------------------------------------------------------------------


def story(rng, n_runs=2, n_scans=400, tr=2.0):
    events = []
    for run in range(1, n_runs + 1):
        t = 1.0
        while t < n_scans * tr - 20:
            d = rng.uniform(0.2, 0.5)
            events.append(WordEvent("w", t, t + d, run))
            t += d + rng.uniform(0.02, 0.6)
    return events


def test_design_rows_and_split():
    rng = np.random.default_rng(5)
    ev = story(rng)
    vals = {"cfg_bottomup": rng.integers(1, 5, len(ev)).astype(float)}
    dm = build_design(ev, vals, {}, {1: 400, 2: 400}, DesignConfig(targets=("cfg_bottomup",)))
    assert dm.n_rows == 800
    assert dm.run_lengths == [400, 400]
    tr, te = dm.split()
    assert (tr.stop - tr.start, te.stop - te.start) == (400, 400)
    assert dm.split_labels().count("train") == 400
    x = dm.column("cfg_bottomup")
    w = dm.column("wordrate")
    assert abs(np.corrcoef(x, w)[0, 1]) < 1e-10
    assert abs(x.mean()) < 1e-10


def test_design_drops_one_of_a_correlated_pair():
    rng = np.random.default_rng(6)
    ev = story(rng)
    td = rng.integers(1, 6, len(ev)).astype(float)
    lc = td + (rng.random(len(ev)) < 0.02)
    vals = {"cfg_topdown": td, "cfg_leftcorner": lc}
    cfg = DesignConfig(targets=tuple(vals), drop_priority=("cfg_topdown",))
    dm = build_design(ev, vals, {}, {1: 400, 2: 400}, cfg)
    assert dm.dropped == ["cfg_leftcorner"]
    assert "cfg_topdown" in dm.names and "cfg_leftcorner" not in dm.names


def test_design_unresolved_pair_raises():
    rng = np.random.default_rng(6)
    ev = story(rng)
    td = rng.integers(1, 6, len(ev)).astype(float)
    vals = {"cfg_topdown": td, "cfg_leftcorner": td * 2}
    with pytest.raises(CollinearityError, match="cfg_topdown.*cfg_leftcorner"):
        build_design(ev, vals, {}, {1: 400, 2: 400}, DesignConfig(targets=tuple(vals), drop_priority=()))


def test_design_volume_skip():
    rng = np.random.default_rng(7)
    ev = story(rng, n_scans=100)
    dm = build_design(ev, {}, {}, {1: 100, 2: 100}, DesignConfig(skip_first_run=10, skip_later_runs=5, n_train=50, n_test=50))
    assert dm.run_lengths == [90, 95]
    assert dm.times[0] == 20.0
    assert dm.times[90] == 200.0 + 10.0


def test_design_covariate_on_story_timeline():
    rng = np.random.default_rng(8)
    ev = story(rng, n_scans=100)
    rate = 10.0
    t = np.arange(0, 400.0, 1 / rate)
    cov = PredictorSeries("rms", "continuous", t, np.sin(t / 5.0) + 0.1 * rng.standard_normal(t.size))
    dm = build_design(ev, {}, {"rms": cov}, {1: 100, 2: 100}, DesignConfig(n_train=100, n_test=100))
    # run 2 must see the covariate from t = 200 s on
    kernel = hrf_kernel(HrfParams(), 1 / 50.0)
    local = PredictorSeries("rms", "continuous", t - 200.0, cov.values)
    raw = convolve_resample(local, kernel, 100).values
    z = (raw - raw.mean()) / raw.std(ddof=1)
    np.testing.assert_allclose(dm.column("rms")[100:], z, atol=1e-12)


def test_design_split_too_short():
    rng = np.random.default_rng(9)
    dm = build_design(story(rng, n_runs=1, n_scans=100), {}, {}, {1: 100}, DesignConfig())
    with pytest.raises(InputError):
        dm.split()


def test_design_unknown_run():
    with pytest.raises(InputError, match="runs without"):
        build_design([WordEvent("w", 1.0, 1.2, 3), WordEvent("v", 2.0, 2.2, 1)], {}, {}, {1: 50}, DesignConfig())


# -- readers -------------------------------------------------------------------------


def test_read_events():
    ev = read_events(["word\tonset_s\toffset_s\trun\n", "Mary\t0.1\t0.4\t1\n", "reads\t0.5\t0.8\t1\n"])
    assert ev == [WordEvent("Mary", 0.1, 0.4, 1), WordEvent("reads", 0.5, 0.8, 1)]


@pytest.mark.parametrize(
    "lines",
    [["Mary\t0.1\t0.4\n"], ["Mary\tx\t0.4\t1\n"], ["a\t1.0\t1.2\t1\n", "b\t0.5\t0.7\t1\n"], ["a\t1.0\t0.5\t1\n"]],
)
def test_read_events_errors(lines):
    with pytest.raises(InputError):
        read_events(lines)


def test_read_covariate():
    s = read_covariate(["#rate_hz=4\n", "1\n", "2\n", "3\n"], "rms")
    assert list(s.times) == [0.0, 0.25, 0.5]
    with pytest.raises(InputError, match="rate_hz"):
        read_covariate(["1\n"], "rms")
    with pytest.raises(InputError, match="line 3"):
        read_covariate(["#rate_hz=4\n", "1\n", "oops\n"], "rms")
