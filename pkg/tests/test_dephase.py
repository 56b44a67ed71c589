import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_bundle
from nvdephase.dephase import (CLASSIFICATION, analyze_correlation, autocorrelation, crossing_time, cumulant_g,
                               dephasing_function, disorder_ensemble, extract_rate, fit_correlation, localization,
                               pure_dephasing, resolve_contributions, aggregate_report)
from nvdephase.dephase.fitting import TAU_UPPER_FACTOR
from nvdephase.ingest import generate_synthetic
from nvdephase.fluct import Correlation, FluctuationTrace, analytic_autocorrelation, mode_couplings, thermal_state


def _trace(values, dt=1e-12):
    values = np.asarray(values, dtype=float)
    return FluctuationTrace(np.arange(len(values)) * dt, values, "sp-nu")


def _corr(t, c):
    return Correlation(np.asarray(t), np.asarray(c), "estimated", 1)


# -- autocorrelation -----------------------------------------------------------


def test_constant_trace():
    c = autocorrelation(_trace(np.full(64, 3.0)))
    np.testing.assert_allclose(c.values, 9.0, rtol=1e-12)
    assert len(c.values) == 33 and c.times[0] == 0.0


def test_phase_averaged_cosine():
    n, a, w = 256, 2.0, 2 * np.pi * 1e11
    t = np.arange(n) * 1e-13
    traces = [_trace(a * np.cos(w * t + p), 1e-13) for p in np.linspace(0, 2 * np.pi, 16, endpoint=False)]
    c = autocorrelation(traces, max_lag=100)
    np.testing.assert_allclose(c.values, a ** 2 / 2 * np.cos(w * c.times), rtol=0, atol=1e-12 * a ** 2)


def test_direct_lag_products_match():
    x = np.random.default_rng(0).standard_normal(50)
    c = autocorrelation(_trace(x), max_lag=10)
    direct = [np.dot(x[k:], x[:len(x) - k]) / (len(x) - k) for k in range(11)]
    np.testing.assert_allclose(c.values, direct, rtol=1e-12, atol=1e-14)


def test_analytic_passthrough():
    c = Correlation(np.arange(20) * 1.0, np.ones(20), "analytic", 0)
    assert autocorrelation(c) is c


def test_mismatched_grids():
    with pytest.raises(ValueError, match="mismatched"):
        autocorrelation([_trace(np.ones(10)), _trace(np.ones(10), dt=2e-12)])
    with pytest.raises(ValueError):
        autocorrelation([])


# -- fitting -------------------------------------------------------------------


def test_plain_fit_round_trip():
    t = np.linspace(0, 20e-12, 400)
    fit = fit_correlation(_corr(t, 4e-9 * np.exp(-t / 2e-12))).plain
    assert fit.A == pytest.approx(4e-9, rel=1e-3)
    assert fit.tau_c == pytest.approx(2e-12, rel=1e-3)
    assert abs(fit.B) < 1e-3 * 4e-9
    assert fit.flag == ""


def test_sinusoidal_fit_round_trip():
    t = np.linspace(0, 20e-12, 400)
    a, tau, b, w, phi = 3.0, 4e-12, 0.2, 2 * np.pi * 3e11, math.pi / 3
    c = a * np.sin(w * t + phi) * np.exp(-t / tau) + b
    rep = fit_correlation(_corr(t, c))
    s = rep.sinusoidal
    assert s.tau_c == pytest.approx(tau, rel=1e-3)
    assert s.omega == pytest.approx(w, rel=1e-3)
    assert s.B == pytest.approx(b, rel=1e-3)
    np.testing.assert_allclose(s.evaluate(t), c, rtol=0, atol=1e-3 * a)
    assert s.residual < 1e-3 * rep.plain.residual


def test_constant_correlation_no_decay():
    t = np.linspace(0, 1e-9, 64)
    rep = fit_correlation(_corr(t, np.full(64, 5.0)))
    assert rep.plain.flag == "no decay resolved"
    assert rep.plain.tau_c == pytest.approx(TAU_UPPER_FACTOR * 1e-9)


def test_fit_preconditions():
    with pytest.raises(ValueError, match="16"):
        fit_correlation(_corr(np.arange(10.0), np.ones(10)))
    with pytest.raises(ValueError, match="positive"):
        fit_correlation(_corr(np.arange(20.0), -np.ones(20)))


def test_plain_only_fit():
    t = np.linspace(0, 20e-12, 100)
    rep = fit_correlation(_corr(t, np.exp(-t / 2e-12)), sinusoidal=False)
    assert rep.sinusoidal is None


# -- cumulant ------------------------------------------------------------------


def test_g_limits():
    d2, tau = 1e16, 1e-12
    assert cumulant_g(d2, tau, 0.0) == 0.0
    long = np.array([1e-8, 1e-6])
    np.testing.assert_allclose(cumulant_g(d2, tau, long), d2 * tau * long - d2 * tau ** 2, rtol=1e-10)
    short = np.array([1e-16, 1e-15])
    np.testing.assert_allclose(cumulant_g(d2, tau, short), d2 * short ** 2 / 2, rtol=1e-3)
    np.testing.assert_allclose(cumulant_g(d2, math.inf, short), d2 * short ** 2 / 2, rtol=1e-15)


def test_g_convex_and_slope():
    d2, tau = 2e14, 3e-11
    t = np.linspace(0, 50 * tau, 5001)
    g = cumulant_g(d2, tau, t)
    assert np.all(np.diff(g, 2) >= -1e-12 * g.max())
    slope = np.gradient(g, t)
    assert slope[-1] == pytest.approx(d2 * tau, rel=1e-3)


@settings(max_examples=60, deadline=None)
@given(st.floats(1e6, 1e20), st.floats(1e-15, 1e-6))
def test_g_monotone(d2, tau):
    g = cumulant_g(d2, tau, np.linspace(0, 20 * tau, 200))
    assert g[0] == 0.0 and np.all(np.diff(g) >= 0)


def test_g_preconditions():
    with pytest.raises(ValueError):
        cumulant_g(-1.0, 1.0, [0.0])
    with pytest.raises(ValueError):
        cumulant_g(1.0, 0.0, [0.0])


def test_dephasing_function_examples():
    np.testing.assert_array_equal(dephasing_function(np.zeros(5)), 1.0)
    assert dephasing_function(1e16 * 1e-12 * 1e-4) == pytest.approx(math.exp(-1), rel=1e-12)
    t = np.linspace(0, 3e-9, 30001)
    d = dephasing_function(cumulant_g(1e18, math.inf, t))
    assert crossing_time(t, d).gamma_inverse == pytest.approx(math.sqrt(2) / 1e9, rel=1e-6)


def test_extract_rate_limits():
    fast = extract_rate(1e16, 1e-12)
    assert fast.regime == "fast"
    assert fast.gamma_inverse == pytest.approx(1e-4, rel=1e-2)
    slow = extract_rate(1e18, 1e-6)
    assert slow.regime == "slow"
    assert slow.gamma_inverse == pytest.approx(math.sqrt(2) / 1e9, rel=1e-2)
    none = extract_rate(0.0, 1e-12)
    assert math.isinf(none.gamma_inverse) and none.regime == "undefined" and none.rate == 0.0


@settings(max_examples=60, deadline=None)
@given(st.floats(1e8, 1e24), st.floats(1e-15, 1e-3))
def test_extract_rate_solves_g_equals_one(d2, tau):
    est = extract_rate(d2, tau)
    assert float(cumulant_g(d2, tau, est.gamma_inverse)) == pytest.approx(1.0, rel=1e-9)


def test_crossing_time_extrapolates():
    t = np.linspace(0, 1e-6, 100)
    d2, tau = 1e16, 1e-12
    d = dephasing_function(cumulant_g(d2, tau, t))
    est = crossing_time(t, d, d2, tau)
    assert est.extrapolated and est.gamma_inverse == pytest.approx(extract_rate(d2, tau).gamma_inverse)
    with pytest.raises(ValueError):
        crossing_time(t, d)
    t2 = np.linspace(0, 3e-4, 30001)
    est = crossing_time(t2, dephasing_function(cumulant_g(d2, tau, t2)), d2, tau)
    assert not est.extrapolated
    assert est.gamma_inverse == pytest.approx(extract_rate(d2, tau).gamma_inverse, rel=1e-6)


# -- pipeline ------------------------------------------------------------------


def test_analyze_zero_correlation():
    res = analyze_correlation(_corr(np.arange(20.0), np.zeros(20)), "sp-ph")
    assert math.isinf(res.gamma_inverse) and res.status == "no dephasing" and not res.flagged


def test_pure_interval_brackets_plain(small_bundle):
    res, corr = pure_dephasing(small_bundle, 300.0)
    assert res.lower <= res.gamma_inverse <= res.upper
    assert res.delta_sq == corr.values[0] > 0
    assert res.classification == ("homogeneous", "irreversible")


def _dominant_bundle():
    # one atom close to the defect carries gradient G; three distant atoms carry -G/3 each
    pos = [[1.0, 0, 0], [0, 4.0, 0], [0, -4.0, 0], [0, 0, 5.0]]
    g = np.zeros((4, 3, 3, 3))
    big = np.diag([-0.5, -0.5, 1.0]) * 0.2
    g[0, 2] = big
    g[1:, 2] = -big / 3
    rows = np.array([[1, -1, 1, -1], [1, 1, -1, -1], [1, -1, -1, 1]]) / 2
    modes = []
    for f, r in zip((5.0, 10.0, 15.0), rows):
        e = np.zeros((4, 3))
        e[:, 2] = r
        modes.append((f, e))
    return make_bundle(pos, zfs=np.diag([-1, -1, 2]) * 0.9567, zfs_grad=g, modes=modes)


def test_resolve_by_atom_dominant_near_atom():
    rows = resolve_contributions(_dominant_bundle(), "atom", 300.0)
    gi = [r.gamma_inverse for r in rows]
    assert int(np.argmin(gi)) == int(np.argmin([r.coordinate for r in rows])) == 0
    assert gi[0] < min(gi[1:])


def test_resolve_zero_gradient_atom(small_bundle):
    rows = resolve_contributions(small_bundle, "atom", 300.0)
    zero = np.abs(small_bundle.zfs_grad).reshape(small_bundle.n_atoms, -1).max(axis=1) == 0
    assert zero.any()
    for r, z in zip(rows, zero):
        if z:
            assert math.isinf(r.gamma_inverse) and r.status == "no dephasing"


def test_resolve_by_mode_additivity():
    b = generate_synthetic({"n_atoms": 16, "seed": 1, "modes": {"n_modes": 8}})
    rows = resolve_contributions(b, "mode", 300.0)
    res, _ = pure_dephasing(b, 300.0)
    total = math.fsum(r.delta_sq for r in rows)
    assert total == pytest.approx(res.delta_sq, rel=1e-10)
    translations = [r for r in rows if r.coordinate == 0.0]
    assert len(translations) == 3 and all(math.isinf(r.gamma_inverse) for r in translations)


def test_resolve_rejects_unknown_axis(small_bundle):
    with pytest.raises(ValueError):
        resolve_contributions(small_bundle, "shell", 300.0)


def test_localization_scores():
    d = np.array([0.5, 1.0, 5.0, 6.0])
    single = np.zeros((4, 3))
    single[1, 0] = 1.0
    assert localization(single, d, 3.0) == pytest.approx(1.0)
    spread = np.full((4, 3), 1 / math.sqrt(12))
    assert localization(spread, d, 3.0) == pytest.approx(2 / 16)


def test_ensemble_zero_concentration(bath_bundle):
    res = disorder_ensemble(bath_bundle, "sp-nu", 0.0, [0, 0, 50], n_configs=4)
    assert math.isinf(res.gamma_inverse) and res.ensemble.std == 0.0 and res.ensemble.n_finite == 0


@pytest.mark.parametrize("channel", ["sp-nu", "sp-nu-ph"])
def test_ensemble_thread_determinism(bath_bundle, channel):
    kw = dict(concentration=0.2, b_field=[0, 0, 100], temperature=300.0, n_configs=6, seed=4)
    a = disorder_ensemble(bath_bundle, channel, workers=1, **kw)
    b = disorder_ensemble(bath_bundle, channel, workers=4, **kw)
    assert a.gamma_inverse == b.gamma_inverse and a.ensemble == b.ensemble
    assert a.classification == CLASSIFICATION[channel]


def test_ensemble_rejects_pure_channel(bath_bundle):
    with pytest.raises(Exception, match="not a disorder channel"):
        disorder_ensemble(bath_bundle, "sp-ph", 0.1, [0, 0, 50])


# -- report --------------------------------------------------------------------


def test_report_single_channel():
    rep = aggregate_report([{"channel": "sp-ph", "gamma_inverse": 5.0}])
    assert rep["t2"] == pytest.approx(5.0)
    rep = aggregate_report([{"channel": "sp-ph", "gamma_inverse": 5.0}], t1=10.0)
    assert rep["total_rate"] == pytest.approx(0.2 + 0.05)


def test_report_hierarchy():
    rep = aggregate_report([{"channel": "sp-ph", "gamma_inverse": 1 / 0.2},
                            {"channel": "sp-nu-ph", "gamma_inverse": 1e8}])
    assert rep["t2"] == pytest.approx(5.0, rel=1e-7)
    assert rep["channels"][1]["homogeneity"] == "inhomogeneous"


def test_report_hahn_excludes_reversible():
    chans = [{"channel": "sp-ph", "gamma_inverse": 5.0}, {"channel": "sp-nu", "gamma_inverse": 1e-3}]
    assert aggregate_report(chans)["t2"] < 1e-3
    hahn = aggregate_report(chans, sequence="hahn")
    assert hahn["t2"] == pytest.approx(5.0)
    assert [c["included"] for c in hahn["channels"]] == [True, False]


def test_report_errors():
    with pytest.raises(ValueError):
        aggregate_report([])
    with pytest.raises(ValueError):
        aggregate_report([{"channel": "sp-ph", "gamma_inverse": 1.0}], sequence="cpmg")
    with pytest.raises(ValueError):
        aggregate_report([{"channel": "sp-ph", "gamma_inverse": 1.0}], t1=0.0)
