import math

import numpy as np
import pytest

import nsesplit as ns
from nsesplit import harness
from nsesplit.scheme import random_smooth, taylor_green


@pytest.fixture(scope="module")
def small():
    g = ns.make_grid(8)
    basis = ns.NoiseBasisSpec(g, 4)
    dif = ns.DiffusionSpec(basis, "additive", amplitude=0.5)
    u0 = taylor_green(g) + random_smooth(g, energy=0.3, seed=1)
    return ns.SchemeConfig(0.25, 4, 0.0, g, dif, u0, m=2)


# -- fit_rate -----------------------------------------------------------------


def test_fit_rate_exact_laws():
    n = np.array([8, 16, 32, 64])
    s, _, hw = ns.fit_rate(n, 3.0 / n)
    assert s == pytest.approx(-1.0, abs=1e-12)
    assert hw == pytest.approx(0.0, abs=1e-9)
    assert ns.fit_rate(n, 2.0 / np.sqrt(n))[0] == pytest.approx(-0.5, abs=1e-12)
    assert ns.fit_rate(n, np.full(4, 0.7))[0] == pytest.approx(0.0, abs=1e-12)


def test_fit_rate_rejects_bad_input():
    with pytest.raises(ValueError):
        ns.fit_rate([8, 16, 32, 64], [1.0, 0.0, 0.5, 0.2])
    with pytest.raises(ValueError):
        ns.fit_rate([8, 16, 32, 64], [1.0, -1.0, 0.5, 0.2])
    with pytest.raises(ValueError):
        ns.fit_rate([8], [1.0])


def test_fit_rate_interval_covers_noisy_slope():
    rng = np.random.default_rng(0)
    n = np.array([8, 16, 32, 64, 128])
    e = 1.0 / n * np.exp(0.05 * rng.standard_normal(5))
    s, _, hw = ns.fit_rate(n, e)
    assert abs(s + 1) < hw + 0.1


# -- localization ---------------------------------------------------------------


def test_localization_series_trivial_cases():
    t = np.linspace(0, 1, 11)
    f = np.ones((2, 11))
    ind, tau = ns.localization_from_series(t, f, f, np.inf)
    assert ind.all() and np.allclose(tau, 1.0)
    ind, tau = ns.localization_from_series(t, f, f, 0.0)
    assert not ind.any() and np.allclose(tau, 0.0)
    ind, tau = ns.localization_from_series(t, f, f, 1.0)
    # running integral 2t reaches 1 at t = 0.5
    assert not ind.any() and np.allclose(tau, 0.5)


def test_localization_monotone_in_M():
    rng = np.random.default_rng(1)
    t = np.linspace(0, 1, 21)
    a, b = rng.random((50, 21)), rng.random((50, 21))
    prev_ind, prev_tau = None, None
    for M in (0.1, 0.5, 1.0, 2.0, 5.0):
        ind, tau = ns.localization_from_series(t, a, b, M)
        if prev_ind is not None:
            assert np.all(ind >= prev_ind)
            assert np.all(tau >= prev_tau)
        prev_ind, prev_tau = ind, tau


def test_localization_on_trajectories(small):
    path = ns.sample_path(small.diffusion, 16, small.T, 0)
    ref = harness.reference_solution(small, path, 16)
    tr = ns.run_scheme(small, path)
    ind, tau = harness.localization(tr, ref, math.inf)
    assert ind and tau == small.T
    ind, tau = harness.localization(tr, ref, 0.0)
    assert not ind and tau == 0.0
    with pytest.raises(ValueError):
        harness.reference_solution(small, path, 8)


def test_reference_equals_self_at_same_resolution(small):
    path = ns.sample_path(small.diffusion, 8, small.T, 3)
    ref = harness.reference_solution(small, path, 8)
    tr = ns.run_scheme(small.with_n(8), path)
    assert np.array_equal(ref.grid_values, tr.grid_values)


# -- diff estimates ----------------------------------------------------------------


def test_diff_estimates_preconditions(small):
    with pytest.raises(ValueError):
        ns.diff_estimates(small, [4, 8], samples=4, master_seed=0)
    with pytest.raises(ValueError):
        ns.diff_estimates(small, [4], samples=8, master_seed=0)
    with pytest.raises(ValueError):
        ns.diff_estimates(small, [4, 6], samples=8, master_seed=0, finest_n=16)


def test_diff_estimates_shape_and_positivity(small):
    rep = ns.diff_estimates(small, [2, 4, 8, 16], samples=8, master_seed=5)
    assert [r["n"] for r in rep.rows] == [2, 4, 8, 16]
    for r in rep.rows:
        for k in ("uy_h", "uy_v", "zu_2p_sup", "zuzy_v"):
            assert r[k] > 0 and r[f"{k}_se"] >= 0
    assert set(rep.slopes) == {"uy_h", "uy_v", "zu_2p_sup", "zuzy_v"}
    assert rep.slopes["uy_h"][0] < 0
    two = ns.diff_estimates(small, [2, 4], samples=8, master_seed=5)
    assert two.slopes == {}


def test_diff_estimates_deterministic_lag_without_noise(small):
    quiet = ns.SchemeConfig(small.T, 4, 0.0, small.grid,
                            ns.DiffusionSpec(small.diffusion.basis, "additive", amplitude=0.0),
                            small.initial_condition, m=2)
    rep = ns.diff_estimates(quiet, [4, 8, 16, 32], samples=8, master_seed=1)
    # u and y coincide except for the lag within each interval: slope <= -0.9
    assert rep.slopes["uy_h"][0] <= -0.9
    assert all(r["zu_2p_sup"] == 0 for r in rep.rows)


def test_workers_do_not_change_results(small):
    a = ns.diff_estimates(small, [2, 4], samples=16, master_seed=9, workers=1)
    b = ns.diff_estimates(small, [2, 4], samples=16, master_seed=9, workers=2)
    assert a.rows == b.rows


def test_coupling_uses_same_paths(small):
    a = ns.diff_estimates(small, [2, 4], samples=8, master_seed=2)
    # same finest resolution (default max(n) * m = 8), extra n consumes the same paths
    b = ns.diff_estimates(small, [2, 4, 8], samples=8, master_seed=2, finest_n=8)
    assert len(set(a.meta["path_digests"])) == 8
    assert a.meta["path_digests"] == b.meta["path_digests"]


def test_standard_error_scales_with_samples(small):
    a = ns.diff_estimates(small, [4, 8], samples=32, master_seed=3)
    b = ns.diff_estimates(small, [4, 8], samples=128, master_seed=3)
    ratio = a.rows[0]["uy_h_se"] / b.rows[0]["uy_h_se"]
    assert ratio == pytest.approx(2.0, rel=0.3)


# -- moments -------------------------------------------------------------------------


def test_moments_without_noise_decay(small):
    quiet = ns.SchemeConfig(small.T, 4, 0.0, small.grid,
                            ns.DiffusionSpec(small.diffusion.basis, "additive", amplitude=0.0),
                            small.initial_condition, m=2)
    rep = ns.moment_estimates(quiet, [2, 4, 8], p=1, samples=8, master_seed=0)
    h0 = float(ns.spectral.h_norm_sq(small.initial_condition))
    for r in rep.rows:
        assert r["sup_E_y_h"] <= h0 * (1 + 1e-12)
    assert set(rep.uniform) == set(harness.MOMENT_KEYS)


def test_moments_report_fields(small):
    rep = ns.moment_estimates(small, [2, 4, 8], p=2, samples=8, master_seed=1)
    for r in rep.rows:
        for k in harness.MOMENT_KEYS:
            assert np.isfinite(r[k]) and f"{k}_se" in r
        assert r["blowups"] == 0
    u = rep.uniform["sup_E_y_h"]
    assert {"max_over_min", "bounded", "kendall_tau", "p_increasing", "increasing_trend"} <= set(u)


# -- rate experiment ------------------------------------------------------------------


def test_rate_preconditions(small):
    with pytest.raises(ValueError):
        ns.rate_experiment(small, [2, 4], n_ref=16, samples=8, master_seed=0)  # 16 < 8 * 4
    with pytest.raises(ValueError):
        ns.rate_experiment(small, [2, 4], n_ref=32, samples=4, master_seed=0)
    with pytest.raises(ValueError):
        ns.rate_experiment(small, [3], n_ref=32, samples=8, master_seed=0)


@pytest.fixture(scope="module")
def rate_report(small):
    return ns.rate_experiment(small, [2, 4], n_ref=32, samples=8, master_seed=4)


def test_rate_report_contents(rate_report):
    rep = rate_report
    assert rep.M > 0
    for r in rep.rows:
        assert 0 <= r["p_omega_c"] <= 1
        assert r["retained"] + r["p_omega_c"] == pytest.approx(1.0)
        assert r["sup_grid"] >= 0 and r["int_v"] >= 0
        assert "halving_rel" in r
    assert rep.per_sample["e_tilde_2"].shape == (8,)


def test_rate_localized_error_monotone_in_M(small):
    lo = ns.rate_experiment(small, [2, 4], n_ref=32, samples=8, master_seed=4, M=1.0, halving_check=False)
    hi = ns.rate_experiment(small, [2, 4], n_ref=32, samples=8, master_seed=4, M=1e6, halving_check=False)
    for a, b in zip(lo.rows, hi.rows):
        assert a["p_omega_c"] >= b["p_omega_c"]
        assert a["sup_grid"] <= b["sup_grid"] + 1e-15
    assert all(r["retained"] == 1.0 for r in hi.rows)


def test_exceedance_trivial_thresholds(rate_report):
    assert ns.exceedance_curve(rate_report, lambda n: 1e12, "huge") == [0.0, 0.0]
    assert ns.exceedance_curve(rate_report, lambda n: 0.0, "zero") == [1.0, 1.0]
    assert rate_report.rows[0]["exceed_huge"] == 0.0
