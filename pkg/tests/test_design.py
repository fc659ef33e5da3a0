import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import optimize

from ncjt import analytic, design
from ncjt.config import SystemConfig


def test_formula_examples():
    assert design.min_pilot_length_formula(0.9, 1, 1.0, 0.8, 0.1) == pytest.approx(30.375)
    assert design.min_pilot_length_formula(0.9, 1, 1.0, 0.8, 0.1) > 0.9 / 0.1
    # gamma N_a sigma_phi^2 / ((1 - gamma) sigma_C^2) = 14.0625 bounds the formula from below,
    # but is not its minimum: that is 27.5625, at sigma_w^2 = sigma_C sqrt(sigma_phi^2 - sigma_C^2) = 0.48
    assert design.min_pilot_length_formula(0.9, 1, 1.0, 0.64, 0.16) == pytest.approx(36.5625)
    assert design.min_pilot_length_formula(0.9, 1, 1.0, 0.64, 0.48) == pytest.approx(27.5625)
    res = optimize.minimize_scalar(
        lambda t: design.min_pilot_length_formula(0.9, 1, 1.0, 0.64, math.exp(t)), bracket=(-5, 0, 5)
    )
    assert math.exp(res.x) == pytest.approx(0.48, rel=1e-5)
    assert res.fun == pytest.approx(27.5625, rel=1e-10)
    assert res.fun > 14.0625
    with pytest.raises(ValueError):
        design.min_pilot_length_formula(0.9, 1, 1.0, 0.8, 0.0)
    with pytest.raises(ValueError):
        design.min_pilot_length_formula(1.0, 1, 1.0, 0.8, 0.1)


@given(st.floats(0.05, 0.99), st.integers(1, 20), st.floats(0.05, 0.99), st.floats(1e-6, 1e3))
def test_formula_lower_bound_and_minimum(gamma, n_a, ratio, sw):
    phi, sc = 1.0, ratio
    val = design.min_pilot_length_formula(gamma, n_a, phi, sc, sw)
    assert val > gamma * n_a / (1 - gamma)
    gap = phi - sc
    w_star = math.sqrt(sc * gap)
    best = design.min_pilot_length_formula(gamma, n_a, phi, sc, w_star)
    assert best == pytest.approx(gamma * n_a * (math.sqrt(sc) + math.sqrt(gap)) ** 2 / ((1 - gamma) * sc), rel=1e-9)
    assert val >= best * (1 - 1e-12)
    assert best >= gamma * n_a * phi / ((1 - gamma) * sc) * (1 - 1e-12)


@pytest.mark.parametrize("alpha", [3.67, 5.0])
@pytest.mark.parametrize("n_a", [1, 2])
def test_formula_convex_in_noise_with_divergent_ends(alpha, n_a):
    c = SystemConfig.preset(alpha=alpha, n_a=n_a)
    phi, sc = analytic.sigma_phi_sq(c), analytic.sigma_c_sq_exact(c)
    t = np.linspace(math.log(1e-12), math.log(1e6), 400)
    f = np.array([design.min_pilot_length_formula(0.5, n_a, phi, sc, math.exp(x)) for x in t])
    # convexity in sigma_w^2: slopes between neighbours on a log grid, measured in sigma_w^2
    w = np.exp(t)
    slopes = np.diff(f) / np.diff(w)
    assert np.all(np.diff(slopes) >= -1e-9 * np.abs(slopes[1:]))
    interior = f.min()
    assert f[0] > 1e6 * interior and f[-1] > 1e6 * interior


def test_np_star_numeric_edge_cases(cfg):
    c = cfg.replace(sigma_w_sq=analytic.noise_for_snr0(cfg, 1e3))
    assert design.np_star_numeric(c, 0.0) == 1
    ceiling = design.snr_ceiling(c)
    with pytest.raises(design.UnreachableTargetError) as info:
        design.np_star_numeric(c, ceiling * 1.0001)
    assert info.value.limit == pytest.approx(ceiling)
    near = design.np_star_numeric(c, ceiling * (1 - 1e-4), np_cap=10**9)
    assert near > 100 * design.np_star_numeric(c, ceiling * 0.5)


@pytest.mark.parametrize("snr0_db", [10.0, 40.0])
@pytest.mark.parametrize("n_a", [1, 3])
def test_np_star_numeric_is_smallest(cfg, snr0_db, n_a):
    c = cfg.replace(n_a=n_a, sigma_w_sq=analytic.noise_for_snr0(cfg, analytic.db_to_linear(snr0_db)))
    target = 0.7 * design.snr_ceiling(c)
    n = design.np_star_numeric(c, target)
    assert analytic.snr(c, n_p=n) >= target
    if n > 1:
        assert analytic.snr(c, n_p=n - 1) < target
    # linear-scan reference over the same predicate
    assert design._linear_scan(lambda k: analytic.snr(c, n_p=k), target, n + 5) == n


def test_np_star_numeric_non_increasing_in_slack(cfg):
    c = cfg.replace(sigma_w_sq=analytic.noise_for_snr0(cfg, 1e3))
    ceiling = design.snr_ceiling(c)
    ns = [design.np_star_numeric(c, g * ceiling) for g in (0.95, 0.9, 0.8, 0.5, 0.2)]
    assert all(a >= b for a, b in zip(ns, ns[1:]))


@pytest.mark.parametrize("alpha", [3.67, 5.0])
def test_np_star_numeric_respects_lower_bound_when_valid(alpha):
    gamma = 0.95
    for n_a in (200, 400):  # gamma (N_a + 1) >= 10
        base = SystemConfig.preset(alpha=alpha, n_a=n_a)
        c = base.replace(sigma_w_sq=analytic.sigma_c_sq_exact(base) * 1e-2)
        approx, valid = design.np_star_approx(c, gamma)
        assert valid
        n = design.np_star_numeric(c, gamma * design.snr_ceiling(c), np_cap=10**9)
        assert n > gamma * n_a / (1 - gamma)
        assert approx > gamma * n_a / (1 - gamma)


def test_validity_flag_threshold(cfg):
    c = cfg.replace(sigma_w_sq=1e-3)
    assert design.np_star_approx(c.replace(n_a=9), 0.9)[1] is False
    assert design.np_star_approx(c.replace(n_a=10), 1 - 1e-9)[1] is True


def test_phase_transition():
    query = design.DesignQuery(scan_cap=1000)
    assert design.na_star_contamination(SystemConfig.preset(alpha=2.1), query).n_a == 1
    assert design.na_star_contamination(SystemConfig.preset(alpha=4.2), query).cap_reached
    assert design.na_star_contamination(SystemConfig.preset(alpha=4.5), query).cap_reached
    inner = design.na_star_contamination(SystemConfig.preset(alpha=3.5), query)
    assert not inner.cap_reached and 1 < inner.n_a < 1000


@pytest.mark.parametrize("alpha", [3.0, 3.5, 3.67, 3.9])
def test_interior_maximum_below_four(alpha):
    vals = design.contamination_scan(SystemConfig.preset(alpha=alpha), 1000)
    best = vals.max()
    assert best > vals[0] and best > vals[-1]


@pytest.mark.parametrize("alpha", [4.2, 4.5, 5.0])
def test_objective_non_decreasing_above_four(alpha):
    vals = design.contamination_scan(SystemConfig.preset(alpha=alpha), 1000)
    assert np.all(np.diff(vals) >= -1e-12 * vals[1:])


def test_suboptimal_cluster_sizes():
    c = SystemConfig.preset(alpha=3.67)
    q = design.DesignQuery(scan_cap=200)
    best = design.na_star_contamination(c, q).n_a
    assert design.na_suboptimal(c, q, 1.0) == best
    three = design.na_suboptimal(c, q, 10**-0.3)
    ten = design.na_suboptimal(c, q, 10**-1.0)
    assert ten <= three <= best
    assert design.na_suboptimal(c, q, 1e-6) == 1
    for alpha in (4.5, 5.0):
        c = SystemConfig.preset(alpha=alpha)
        q = design.DesignQuery(scan_cap=1000)
        assert design.na_suboptimal(c, q, 10**-1.0) <= design.na_suboptimal(c, q, 10**-0.3) < 1000


def test_ties_go_to_smaller_cluster(monkeypatch):
    monkeypatch.setattr(design, "contamination_scan", lambda cfg, cap: np.array([1.0, 3.0, 3.0, 2.0]))
    assert design.na_star_contamination(SystemConfig(), design.DesignQuery(scan_cap=4)).n_a == 2


def test_design_query_validation():
    with pytest.raises(ValueError):
        design.DesignQuery(gamma=1.0)
    with pytest.raises(ValueError):
        design.DesignQuery(scan_cap=0)


@pytest.mark.parametrize("alpha,snr0_db", [(3.67, 40.0), (5.0, 50.0), (3.0, 20.0), (4.5, 60.0)])
def test_crossover_root_contract(alpha, snr0_db):
    base = SystemConfig.preset(alpha=alpha)
    c = base.replace(sigma_w_sq=analytic.noise_for_snr0(base, analytic.db_to_linear(snr0_db)))
    res = design.ncjt_crossover(c)
    if res.n_p is None:
        assert res.dominant in (1, 2)
        return
    s1 = analytic.snr(c.replace(n_a=1), n_p=res.n_p)
    s2 = analytic.snr(c.replace(n_a=2), n_p=res.n_p)
    assert abs(s2 - s1) / s1 < 1e-6
    assert analytic.snr(c.replace(n_a=2), n_p=res.n_p * 1.5) > analytic.snr(c.replace(n_a=1), n_p=res.n_p * 1.5)


def test_crossover_regimes():
    def cross(alpha, snr0_db):
        base = SystemConfig.preset(alpha=alpha)
        return design.ncjt_crossover(base.replace(sigma_w_sq=analytic.noise_for_snr0(base, analytic.db_to_linear(snr0_db))))

    # contamination regime: small crossover for alpha > 4, very large for alpha near 2
    for alpha in (4.5, 5.0):
        assert cross(alpha, 60.0).n_p < 3
    far = cross(2.5, 60.0)
    assert far.n_p is None and far.dominant == 1
    # power-limited regime: at least 40 pilots, growing without bound as SNR0 drops
    for alpha in (3.0, 3.67, 4.0, 5.0):
        assert cross(alpha, 0.0).n_p >= 40
    for alpha in (2.5, 3.67, 5.0):
        seq = [cross(alpha, db).n_p for db in (0.0, -10.0, -20.0, -30.0)]
        assert all(a < b for a, b in zip(seq, seq[1:]))
        assert seq[-1] > 1000


def test_best_cluster_size_grows_with_pilots(cfg):
    c = cfg.replace(sigma_w_sq=analytic.noise_for_snr0(cfg, 1e5))
    sizes = [design.best_cluster_size(c, n_p=n) for n in (1, 10, 100, 1000)]
    assert sizes[0] == 1
    assert all(a <= b for a, b in zip(sizes, sizes[1:]))
    assert sizes[-1] > 1
