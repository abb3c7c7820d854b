import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats as sps

from bayespop.e0 import (
    DoubleLogisticParams,
    E0Draw,
    E0Model,
    E0Series,
    E0World,
    GapParams,
    OmegaConfig,
    e0_error_sd,
    e0_gain,
    e0_hier_loglik,
    fit_gap_mle,
    gap_loglik,
    project_gap,
    simulate_e0_trajectory,
)


def gain_oracle(l, D, k, z, A1=4.4, A2=0.5):
    D1, D2, D3, D4 = D
    a = k / (1 + math.exp(-A1 * (l - D1 - A2 * D2) / D2))
    b = (z - k) / (1 + math.exp(-A1 * (l - D1 - D2 - D3 - A2 * D4) / D4))
    return a + b


P = DoubleLogisticParams((15.0, 25.0, 12.0, 18.0), 2.5, 0.6)


# ---------------------------------------------------------------- gain

def test_gain_saturates_to_z():
    top = sum(P.deltas) + 20 * max(P.deltas[1], P.deltas[3])
    assert abs(e0_gain(top, P) - P.z) < 1e-6


def test_gain_equal_k_z_is_single_logistic():
    p = DoubleLogisticParams(P.deltas, 1.2, 1.1)
    q = DoubleLogisticParams(P.deltas, 1.1, 1.1)
    l = np.linspace(20, 100, 50)
    single = [1.1 / (1 + math.exp(-4.4 * (x - 15 - 12.5) / 25)) for x in l]
    np.testing.assert_allclose(e0_gain(l, q), single, atol=1e-15)
    assert not np.allclose(e0_gain(l, p), single)


def test_gain_matches_oracle_grid():
    l = np.linspace(15, 110, 200)
    expected = [gain_oracle(x, P.deltas, P.k, P.z) for x in l]
    np.testing.assert_allclose(e0_gain(l, P), expected, rtol=0, atol=1e-12)


def test_gain_zero_width_is_floored():
    p = DoubleLogisticParams((20.0, 0.0, 10.0, 0.0), 2.0, 0.5)
    g = e0_gain(np.linspace(15, 100, 30), p)
    assert np.all(np.isfinite(g))


@settings(max_examples=150)
@given(st.tuples(*[st.floats(0.05, 100)] * 4), st.floats(0, 10), st.floats(0, 1.15))
def test_gain_asymptote_property(D, k, z):
    p = DoubleLogisticParams(D, k, z)
    top = sum(D) + 20 * max(D[1], D[3])
    assert abs(float(e0_gain(top, p)) - z) < 1e-6


@given(st.tuples(*[st.floats(0.05, 100)] * 4), st.floats(0, 1.15), st.floats(0, 1),
       st.floats(15, 110))
def test_gain_nonnegative_when_z_at_least_k(D, z, frac, l):
    p = DoubleLogisticParams(D, z * frac, z)
    assert e0_gain(l, p) >= -1e-15


# ---------------------------------------------------------------- omega

def test_omega_shape():
    cfg = OmegaConfig()
    assert e0_error_sd(50, cfg) > e0_error_sd(80, cfg)
    grid = np.linspace(15, 110, 1000)
    w = e0_error_sd(grid, cfg)
    assert np.all(w > 0)
    assert np.all(np.diff(w) < 0)
    assert np.all(np.abs(e0_error_sd(grid + 1e-6, cfg) - w) < 1e-4)


# ---------------------------------------------------------------- hierarchical density

WORLD = E0World((20, 20, 10, 15, 2, 0.5), (10, 10, 5, 5, 1, 0.3))
HYPER = -(4 * math.log(100) + math.log(10) + math.log(1.15)
          + 4 * math.log(50) + math.log(5) + math.log(1))


def e0_prior_oracle(p, world):
    lo = [0, 0, 0, 0, 0, 0]
    hi = [100, 100, 100, 100, 10, 1.15]
    return sum(sps.truncnorm.logpdf(x, (a - m) / s, (b - m) / s, loc=m, scale=s)
               for x, m, s, a, b in zip(p.as_array(), world.means, world.sds, lo, hi))


def test_z_above_cap_is_minus_inf():
    s = E0Series("A", [60, 62], [56, 58], [2000, 2005])
    model = E0Model([s])
    country = np.array([[20, 20, 10, 15, 2, 1.2]])
    assert model.log_density(WORLD.as_array(), country) == -np.inf
    with pytest.raises(ValueError):
        DoubleLogisticParams((20, 20, 10, 15), 2, 1.2)


def test_one_transition_on_curve():
    l0 = 60.0
    l1 = l0 + gain_oracle(l0, P.deltas, P.k, P.z)
    s = E0Series("A", [l0, l1], [55, 57], [2000, 2005])
    ll = e0_hier_loglik([s], [P], WORLD)
    sd = 0.2 + 0.8 / (1 + math.exp((l0 - 65) / 5))
    expected = sps.norm.logpdf(l1, l1, sd) + e0_prior_oracle(P, WORLD) + HYPER
    assert ll == pytest.approx(expected, rel=1e-12)


def test_doubling_sigma_z_changes_only_z_prior():
    s = E0Series("A", [50, 53, 56.5], [47, 50, 53], [1990, 1995, 2000])
    w2 = E0World(WORLD.means, WORLD.sds[:5] + (0.6,))
    diff = e0_hier_loglik([s], [P], w2) - e0_hier_loglik([s], [P], WORLD)
    expected = (sps.truncnorm.logpdf(P.z, -0.5 / 0.6, 0.65 / 0.6, loc=0.5, scale=0.6)
                - sps.truncnorm.logpdf(P.z, -0.5 / 0.3, 0.65 / 0.3, loc=0.5, scale=0.3))
    assert diff == pytest.approx(expected, rel=1e-10)


@settings(max_examples=60)
@given(st.lists(st.floats(-5, 120), min_size=6, max_size=6))
def test_density_finite_exactly_on_support(vals):
    s = E0Series("A", [60, 62], [56, 58], [2000, 2005])
    model = E0Model([s])
    c = np.array([vals])
    inside = np.all(c >= 0) and np.all(c[0] <= [100, 100, 100, 100, 10, 1.15])
    assert np.isfinite(model.log_density(WORLD.as_array(), c)) == inside


# ---------------------------------------------------------------- gap

GP = GapParams(beta=(0.5, 0.01, 0.9, 0.02, -0.05), gamma1=0.95)


def test_gap_clamps():
    assert project_gap(5.0, 70, 50, GP, error=-100) == 0.0
    assert project_gap(5.0, 70, 50, GP, error=100) == 18.0
    mean = 0.5 + 0.01 * 50 + 0.9 * 5 + 0.02 * 70
    assert project_gap(5.0, 70, 50, GP, error=-1 - mean) == 0.0
    assert project_gap(5.0, 70, 50, GP, error=20 - mean) == 18.0


def test_gap_regime_above_M():
    assert project_gap(4.0, 90.0, 50, GP, error=0.0) == pytest.approx(3.8, abs=1e-12)
    below = 0.5 + 0.01 * 50 + 0.9 * 4 + 0.02 * 86.2 - 0.05 * 11.2
    assert project_gap(4.0, 86.2, 50, GP, error=0.0) == pytest.approx(below, abs=1e-12)


def test_gap_many_draws_in_range():
    rng = np.random.default_rng(0)
    G = rng.uniform(0, 18, 10_000)
    l = rng.uniform(30, 95, 10_000)
    out = project_gap(G, l, 45.0, GP, rng)
    assert out.min() >= 0 and out.max() <= 18


def synth_gap_series(rng, params, n_countries=40, n_periods=12, scale=0.01):
    out = []
    for c in range(n_countries):
        l = rng.uniform(40, 70)
        G = rng.uniform(2, 8)
        fem, gaps = [l], [G]
        years = 1950 + 5 * np.arange(n_periods)
        for _ in range(n_periods - 1):
            G = float(project_gap(G, l, fem[0], params, error=scale * rng.standard_t(2)))
            l = min(l + rng.uniform(0.5, 3.5), 95)
            fem.append(l)
            gaps.append(G)
        fem = np.array(fem)
        out.append(E0Series(f"c{c}", fem, fem - np.array(gaps), years))
    return out


def test_gap_mle_recovers_generator():
    rng = np.random.default_rng(1)
    truth = GapParams(beta=(-1.0, 0.02, 0.7, 0.03, -0.06), gamma1=0.95)
    fit = fit_gap_mle(synth_gap_series(rng, truth, scale=0.002))
    assert fit.converged and fit.grad_norm < 1e-8
    assert fit.n_above > 0 and not fit.gamma1_defaulted
    np.testing.assert_allclose(fit.params.beta, truth.beta, rtol=0.01)
    assert fit.params.gamma1 == pytest.approx(0.95, rel=0.01)
    assert fit.params.sigma2 == 0.0665 and fit.params.nu == 2.0


def test_gap_mle_order_invariant_and_maximises():
    rng = np.random.default_rng(2)
    data = synth_gap_series(rng, GP, scale=0.26)
    a = fit_gap_mle(data)
    b = fit_gap_mle(data[::-1])
    np.testing.assert_allclose(a.params.beta, b.params.beta, rtol=1e-10, atol=1e-12)
    assert a.params.gamma1 == pytest.approx(b.params.gamma1, rel=1e-10)
    base = gap_loglik(data, a.params)
    for j in range(5):
        beta = list(a.params.beta)
        beta[j] += 1e-4
        bumped = GapParams(tuple(beta), a.params.gamma1)
        assert gap_loglik(data, bumped) <= base + 1e-9


def test_gap_mle_needs_rows_and_defaults_gamma():
    rng = np.random.default_rng(3)
    data = synth_gap_series(rng, GP, n_countries=3, n_periods=4)
    with pytest.raises(ValueError):
        fit_gap_mle(data)
    low = [E0Series(s.country_id, np.minimum(s.female_e0, 80), np.minimum(s.female_e0, 80) - s.gap,
                    s.period_start_years) for s in synth_gap_series(rng, GP)]
    fit = fit_gap_mle(low, gamma1_default=0.97)
    assert fit.gamma1_defaulted and fit.params.gamma1 == 0.97


def test_l1950_imputed_flag():
    s = E0Series("A", [50, 52], [47, 49], [1960, 1965])
    assert s.l1950 == 50 and s.l1950_imputed
    t = E0Series("B", [45, 50, 52], [42, 47, 49], [1950, 1955, 1960])
    assert t.l1950 == 45 and not t.l1950_imputed


# ---------------------------------------------------------------- simulation

def test_simulation_zero_noise_approaches_z():
    draw = E0Draw(DoubleLogisticParams((10, 10, 10, 10), 3.0, 0.8), 50.0)
    f, m = simulate_e0_trajectory(85.0, 5.0, draw, GP, 30, np.random.default_rng(0), noise=False)
    assert abs(np.diff(f)[-1] - 0.8) < 1e-6


def test_simulation_gap_bounds_and_reproducible():
    draw = E0Draw(P, 45.0)
    rng = np.random.default_rng(4)
    gaps = []
    for _ in range(300):
        f, m = simulate_e0_trajectory(55.0, 5.0, draw, GP, 30, rng)
        gaps.append(f - m)
    gaps = np.concatenate(gaps)
    assert gaps.min() >= 0 and gaps.max() <= 18
    a = simulate_e0_trajectory(55.0, 5.0, draw, GP, 10, np.random.default_rng(9))
    b = simulate_e0_trajectory(55.0, 5.0, draw, GP, 10, np.random.default_rng(9))
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])


def test_horizon_one_is_composition():
    draw = E0Draw(P, 45.0)
    f, m = simulate_e0_trajectory(62.0, 5.5, draw, GP, 1, np.random.default_rng(5))
    rng = np.random.default_rng(5)
    l1 = 62.0 + e0_gain(62.0, P) + e0_error_sd(62.0) * rng.standard_normal()
    G1 = project_gap(5.5, 62.0, 45.0, GP, rng)
    assert f[0] == pytest.approx(l1, abs=1e-12)
    assert m[0] == pytest.approx(l1 - G1, abs=1e-12)
