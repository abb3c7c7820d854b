import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bayespop.demog import AgePyramid, VitalSchedule, potential_support_ratio, project_horizon
from bayespop.trajectory import (
    FertilityAgePattern,
    TrajectorySet,
    brass_lx,
    build_period_schedules,
    bundled_standard,
    e0_to_survival,
    e0_to_survival_batch,
    quantile_summary,
    read_quantiles,
    read_trajectories,
    run_probabilistic_projection,
    survival_from_alpha,
    synthetic_standard,
    tfr_to_asfr,
    write_quantiles,
    write_trajectories,
)

STD = bundled_standard()
N = 21
PATTERN = FertilityAgePattern([0.05, 0.2, 0.3, 0.25, 0.13, 0.06, 0.01])


def base_pyramid():
    ages = np.arange(N)
    f = 1000 * np.exp(-0.04 * ages) * STD.lx_female
    m = 1000 * np.exp(-0.04 * ages) * STD.lx_male
    return AgePyramid(f, m, 5, "2010")


def lt_e0_oracle(lx, width=5):
    """Trapezoid person-years with a constant-hazard open group."""
    total = 0.0
    for a, b in zip(lx[:-1], lx[1:]):
        total += width * (a + b) / 2
    mu = np.log(lx[-2] / lx[-1]) / width
    return (total + lx[-1] / mu) / lx[0]


# ---------------------------------------------------------------- fertility

def test_uniform_pattern_asfr():
    p = FertilityAgePattern(np.full(7, 1 / 7))
    np.testing.assert_allclose(tfr_to_asfr(2.1, p), 0.06, rtol=1e-14)


def test_nonuniform_pattern_by_hand():
    asfr = tfr_to_asfr(3.0, PATTERN)
    np.testing.assert_allclose(asfr, [0.03, 0.12, 0.18, 0.15, 0.078, 0.036, 0.006], rtol=1e-14)


@given(st.floats(1e-3, 12))
def test_asfr_reconstructs_tfr(f):
    assert abs(5 * tfr_to_asfr(f, PATTERN).sum() - f) <= 1e-12 * max(f, 1)


def test_pattern_validation():
    with pytest.raises(ValueError):
        FertilityAgePattern([0.5, 0.6])
    with pytest.raises(ValueError):
        FertilityAgePattern([1.2, -0.2])


# ---------------------------------------------------------------- mortality

def test_bundled_matches_generator():
    np.testing.assert_allclose(STD.lx_female, synthetic_standard().lx_female, rtol=1e-15)


def test_alpha_zero_returns_standard():
    _, e = survival_from_alpha(0.0, STD, "female")
    assert e[0] == pytest.approx(lt_e0_oracle(STD.lx_female), rel=1e-12)
    np.testing.assert_allclose(brass_lx(0.0, STD.lx_male)[0], STD.lx_male, rtol=1e-12)


def test_inversion_grid_and_recompute():
    targets = np.arange(25.0, 95.01, 2.5)
    for sex in ("female", "male"):
        r = e0_to_survival_batch(targets, STD, sex, N)
        recomputed = [lt_e0_oracle(l) for l in brass_lx(r.alpha, STD.lx(sex))]
        assert np.max(np.abs(np.array(recomputed) - targets)) < 0.05


def test_survival_monotone_in_alpha_scan():
    alphas = np.linspace(2.0, -2.0, 41)
    S, e = survival_from_alpha(alphas, STD, "female", N)
    assert np.all(np.diff(e) > 0)
    assert np.all(np.diff(S, axis=0) >= -1e-15)
    assert np.all((S >= 0) & (S <= 1))


def test_unattainable_target_names_span():
    with pytest.raises(ValueError, match="achievable span"):
        e0_to_survival(5.0, STD, "female")
    with pytest.raises(ValueError, match="achievable span"):
        e0_to_survival(120.0, STD, "male")


def test_open_group_collapse():
    S_full = e0_to_survival(70.0, STD, "female")
    S_short = e0_to_survival(70.0, STD, "female", n_groups=18)
    np.testing.assert_allclose(S_short[:16], S_full[:16])
    assert S_short[16] == S_short[17]


# ---------------------------------------------------------------- projection

def ts(name, vals, ids=None):
    vals = np.atleast_2d(vals)
    return TrajectorySet(name, vals, [str(2010 + 5 * t) for t in range(vals.shape[1])],
                         ids or ())


def independent_schedules(tfr, e0f, e0m, mig=None, srb=1.05):
    """Compose schedules directly from the inversion and the birth-averaging rule."""
    out = []
    for t in range(len(tfr)):
        rf = e0_to_survival_batch([e0f[t]], STD, "female", N)
        rm = e0_to_survival_batch([e0m[t]], STD, "male", N)
        F = np.zeros(N)
        F[3:10] = np.asarray(tfr[t]) * PATTERN.proportions / 5
        Sf, Sm = rf.survival[0], rm.survival[0]
        avg = np.array([2.5 * (F[x] + Sf[x] * (F[x + 1] if x + 1 < N else 0)) for x in range(N)])
        Bf = rf.birth_survival[0] * avg / (1 + srb)
        Bm = rm.birth_survival[0] * avg / (1 + srb)
        mf, mm = (None, None) if mig is None else mig
        out.append((VitalSchedule(Bf, Sf, mf), VitalSchedule(Bm, Sm, mm)))
    return out


def test_single_trajectory_equals_deterministic():
    tfr = [1.8, 1.75, 1.7, 1.72]
    e0f, e0m = [80, 80.8, 81.5, 82.1], [75, 75.9, 76.7, 77.4]
    out = run_probabilistic_projection(base_pyramid(), ts("tfr", tfr), ts("e0_female", e0f),
                                       ts("e0_male", e0m), PATTERN, STD)
    det = project_horizon(base_pyramid(), independent_schedules(tfr, e0f, e0m), 4)
    np.testing.assert_allclose(out["total_population"].values[0],
                               det.indicator(lambda p: p.both_sexes.sum()), rtol=1e-12)
    np.testing.assert_array_equal(out["psr"].values[0], det.indicator(potential_support_ratio))
    same = project_horizon(base_pyramid(),
                           build_period_schedules(tfr, e0f, e0m, PATTERN, STD, N), 4)
    np.testing.assert_array_equal(out["psr"].values[0], same.indicator(potential_support_ratio))


def test_doubled_migration_against_composed_run():
    rng = np.random.default_rng(0)
    mig = (rng.uniform(0, 20, N), rng.uniform(0, 20, N))
    doubled = (2 * mig[0], 2 * mig[1])
    tfr, e0f, e0m = [2.0, 1.9, 1.9], [70, 71, 72], [66, 67, 68]
    args = (ts("tfr", tfr), ts("e0_female", e0f), ts("e0_male", e0m), PATTERN, STD)
    a = run_probabilistic_projection(base_pyramid(), *args, migration=mig)
    b = run_probabilistic_projection(base_pyramid(), *args, migration=doubled)
    composed = project_horizon(base_pyramid(), independent_schedules(tfr, e0f, e0m, doubled), 3)
    np.testing.assert_allclose(b["total_population"].values[0],
                               composed.indicator(lambda p: p.both_sexes.sum()), rtol=1e-12)
    assert not np.allclose(a["total_population"].values, b["total_population"].values)
    for k in ("tfr", "e0_female", "e0_male"):
        np.testing.assert_array_equal(a[k].values, b[k].values)


def test_pairing_and_psr_per_period():
    rng = np.random.default_rng(1)
    n, H = 5, 3
    tfr = rng.uniform(1.3, 2.5, (n, H))
    e0f = rng.uniform(70, 85, (n, H))
    e0m = e0f - rng.uniform(3, 7, (n, H))
    ids = tuple(range(100, 105))
    out = run_probabilistic_projection(base_pyramid(), ts("tfr", tfr, ids),
                                       ts("e0_female", e0f, ids), ts("e0_male", e0m, ids),
                                       PATTERN, STD)
    assert out["psr"].trajectory_ids == ids
    i = 3
    det = project_horizon(base_pyramid(), independent_schedules(tfr[i], e0f[i], e0m[i]), H)
    np.testing.assert_allclose(out["psr"].values[i], det.indicator(potential_support_ratio),
                               rtol=1e-12)
    with pytest.raises(ValueError, match="paired"):
        run_probabilistic_projection(base_pyramid(), ts("tfr", tfr, ids),
                                     ts("e0_female", e0f), ts("e0_male", e0m, ids), PATTERN, STD)
    with pytest.raises(ValueError):
        run_probabilistic_projection(base_pyramid(), ts("tfr", tfr), ts("e0_female", e0f[:2]),
                                     ts("e0_male", e0m), PATTERN, STD)


def test_nan_inputs_rejected():
    with pytest.raises(ValueError):
        ts("tfr", [[1.5, np.nan]])


# ---------------------------------------------------------------- quantiles

def test_constant_quantiles():
    q = quantile_summary(ts("x", np.full((50, 4), 3.3)))
    np.testing.assert_allclose(q.values, 3.3)


def sort_oracle(col, p):
    s = sorted(col)
    pos = p * (len(s) - 1)
    lo = int(np.floor(pos))
    hi = min(lo + 1, len(s) - 1)
    return s[lo] + (pos - lo) * (s[hi] - s[lo])


@settings(max_examples=40)
@given(st.integers(1, 60), st.integers(1, 5), st.integers(0, 10_000))
def test_quantiles_nested_and_match_oracle(n, H, seed):
    v = np.random.default_rng(seed).normal(size=(n, H))
    q = quantile_summary(ts("x", v))
    assert np.all(np.diff(q.values, axis=1) >= 0)
    for j in range(H):
        for k, p in enumerate(q.probs):
            assert q.values[j, k] == pytest.approx(sort_oracle(v[:, j], p), abs=1e-12)


def test_csv_round_trips(tmp_path):
    rng = np.random.default_rng(2)
    a = ts("tfr", rng.uniform(1, 3, (4, 3)), [7, 8, 9, 10])
    b = ts("psr", rng.uniform(1, 3, (4, 3)), [7, 8, 9, 10])
    write_trajectories([a, b], tmp_path / "t.csv")
    back = read_trajectories(tmp_path / "t.csv")
    np.testing.assert_array_equal(back["psr"].values, b.values)
    assert back["tfr"].trajectory_ids == a.trajectory_ids
    qa = quantile_summary(a)
    write_quantiles([qa], tmp_path / "q.csv")
    qb = read_quantiles(tmp_path / "q.csv")["tfr"]
    np.testing.assert_array_equal(qb.values, qa.values)
    assert qb.probs == qa.probs
    header = (tmp_path / "q.csv").read_text().splitlines()[0]
    assert header == "indicator,period,p0.025,p0.1,p0.5,p0.9,p0.975"
