"""Posterior-predictive population projection.

TFR and e0 trajectories are turned into per-period vital schedules
(age-specific fertility from a fixed age pattern, survival from a Brass
relational logit life table) and pushed through the cohort-component engine,
one trajectory at a time. Trajectory ``i`` of every input belongs to the same
joint draw.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .demog import (
    DEFAULT_SEX_RATIO_AT_BIRTH,
    AgePyramid,
    VitalSchedule,
    median_age,
    potential_support_ratio,
    project_horizon,
    total_population,
)

AGE_WIDTH = 5
DEFAULT_PROBS = (0.025, 0.1, 0.5, 0.9, 0.975)
ALPHA_BRACKET = (-3.0, 2.0)
E0_TOLERANCE = 0.05


# --------------------------------------------------------------------------
# trajectory containers

@dataclass(frozen=True)
class TrajectorySet:
    """Indicator values, one row per trajectory and one column per period."""

    indicator: str
    values: np.ndarray
    period_labels: tuple
    trajectory_ids: tuple = ()

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim == 1:
            v = v[None, :]
        if v.ndim != 2 or v.shape[0] < 1:
            raise ValueError(f"{self.indicator}: need at least one trajectory")
        if not np.all(np.isfinite(v)):
            raise ValueError(f"{self.indicator}: non-finite trajectory values")
        labels = tuple(str(p) for p in self.period_labels)
        if len(labels) != v.shape[1]:
            raise ValueError(f"{self.indicator}: {len(labels)} labels for {v.shape[1]} periods")
        ids = tuple(int(i) for i in self.trajectory_ids) or tuple(range(v.shape[0]))
        if len(ids) != v.shape[0]:
            raise ValueError(f"{self.indicator}: trajectory ids do not match rows")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "period_labels", labels)
        object.__setattr__(self, "trajectory_ids", ids)

    @property
    def n_trajectories(self) -> int:
        return self.values.shape[0]

    @property
    def n_periods(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class QuantileTable:
    indicator: str
    period_labels: tuple
    probs: tuple
    values: np.ndarray   # [n_periods x n_probs]


def quantile_summary(ts: TrajectorySet, probs: Sequence[float] = DEFAULT_PROBS) -> QuantileTable:
    """Pointwise empirical quantiles per period.

    Uses linear interpolation between order statistics (numpy's ``linear``
    method: position ``p (n - 1)`` in the sorted sample).
    """
    probs = tuple(float(p) for p in probs)
    if any(not 0 < p < 1 for p in probs):
        raise ValueError("quantile probabilities must lie in (0, 1)")
    q = np.quantile(ts.values, probs, axis=0, method="linear").T
    return QuantileTable(ts.indicator, ts.period_labels, probs, q)


def _prob_label(p: float) -> str:
    return f"p{p:g}"


def write_trajectories(sets: Sequence[TrajectorySet], path) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["indicator", "trajectory_id", "period", "value"])
        for ts in sets:
            for i, tid in enumerate(ts.trajectory_ids):
                for j, lab in enumerate(ts.period_labels):
                    w.writerow([ts.indicator, tid, lab, repr(float(ts.values[i, j]))])
    return path


def read_trajectories(path) -> dict:
    rows: dict = {}
    with Path(path).open(newline="", encoding="utf-8") as fh:
        for r in csv.DictReader(fh):
            ind = rows.setdefault(r["indicator"], {})
            ind.setdefault(int(r["trajectory_id"]), {})[r["period"]] = float(r["value"])
    out = {}
    for ind, by_id in rows.items():
        ids = list(by_id)
        labels = list(by_id[ids[0]])
        vals = [[by_id[i][lab] for lab in labels] for i in ids]
        out[ind] = TrajectorySet(ind, np.array(vals), tuple(labels), tuple(ids))
    return out


def write_quantiles(tables: Sequence[QuantileTable], path) -> Path:
    path = Path(path)
    probs = tables[0].probs if tables else DEFAULT_PROBS
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["indicator", "period"] + [_prob_label(p) for p in probs])
        for t in tables:
            if t.probs != probs:
                raise ValueError("all quantile tables in one file must share probabilities")
            for lab, row in zip(t.period_labels, t.values):
                w.writerow([t.indicator, lab] + [repr(float(x)) for x in row])
    return path


def read_quantiles(path) -> dict:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        probs = tuple(float(h[1:]) for h in header[2:])
        acc: dict = {}
        for r in reader:
            labs, vals = acc.setdefault(r[0], ([], []))
            labs.append(r[1])
            vals.append([float(x) for x in r[2:]])
    return {k: QuantileTable(k, tuple(l), probs, np.array(v)) for k, (l, v) in acc.items()}


# --------------------------------------------------------------------------
# fertility

@dataclass(frozen=True)
class FertilityAgePattern:
    """Share of TFR contributed by each reproductive age group, starting at ``first_group``."""

    proportions: np.ndarray
    first_group: int = 3
    age_width: int = AGE_WIDTH

    def __post_init__(self):
        p = np.array(self.proportions, dtype=float)
        if p.ndim != 1 or p.size == 0 or np.any(p < 0) or abs(p.sum() - 1) > 1e-9:
            raise ValueError("fertility proportions must be non-negative and sum to 1")
        p.setflags(write=False)
        object.__setattr__(self, "proportions", p)

    def full(self, values: np.ndarray, n_groups: int) -> np.ndarray:
        out = np.zeros(n_groups)
        hi = self.first_group + self.proportions.size
        if hi > n_groups:
            raise ValueError("fertility pattern extends past the last age group")
        out[self.first_group:hi] = values
        return out


def tfr_to_asfr(f, pattern: FertilityAgePattern) -> np.ndarray:
    """Age-specific rates per woman-year; ``k * sum(ASFR) == f``."""
    f = np.asarray(f, float)
    return f[..., None] * pattern.proportions / pattern.age_width


# --------------------------------------------------------------------------
# mortality

@dataclass(frozen=True)
class StandardLifeTable:
    """Survivorship at the start of each age group for both sexes (radix 1)."""

    lx_female: np.ndarray
    lx_male: np.ndarray
    age_width: int = AGE_WIDTH

    def __post_init__(self):
        for name in ("lx_female", "lx_male"):
            l = np.array(getattr(self, name), dtype=float)
            if l.ndim != 1 or l.size < 3:
                raise ValueError(f"{name}: need at least three ages")
            if l[0] != 1 or np.any(np.diff(l) > 0) or np.any(l <= 0):
                raise ValueError(f"{name}: need 1 = l(0) >= l(x) >= l(x+1) > 0")
            l.setflags(write=False)
            object.__setattr__(self, name, l)
        if self.lx_female.size != self.lx_male.size:
            raise ValueError("female and male tables must share ages")

    def lx(self, sex: str) -> np.ndarray:
        if sex not in ("female", "male"):
            raise ValueError(f"sex must be 'female' or 'male', got {sex!r}")
        return self.lx_female if sex == "female" else self.lx_male

    def e0(self, sex: str) -> float:
        return float(_life_table(self.lx(sex)[None, :], self.age_width)[1][0])


def siler_lx(ages, a1, b1, a2, a3, b3) -> np.ndarray:
    """Survivorship under the Siler hazard ``a1 exp(-b1 x) + a2 + a3 exp(b3 x)``."""
    x = np.asarray(ages, float)
    H = a1 / b1 * (1 - np.exp(-b1 * x)) + a2 * x + a3 / b3 * (np.exp(b3 * x) - 1)
    return np.exp(-H)


SILER_FEMALE = (0.025, 1.2, 0.0004, 2.5e-5, 0.1)
SILER_MALE = (0.03, 1.2, 0.0009, 4.5e-5, 0.095)


def synthetic_standard(last_age: int = 100) -> StandardLifeTable:
    """Smooth synthetic standard (female e0 near 75, male near 70). Not an empirical table."""
    ages = np.arange(0, last_age + 1, AGE_WIDTH)
    return StandardLifeTable(siler_lx(ages, *SILER_FEMALE), siler_lx(ages, *SILER_MALE))


def read_standard_life_table(path) -> StandardLifeTable:
    by_sex: dict = {"female": {}, "male": {}}
    with Path(path).open(newline="", encoding="utf-8") as fh:
        for r in csv.DictReader(fh):
            by_sex[r["sex"]][int(r["age_group_start"])] = float(r["lx"])
    ages = sorted(by_sex["female"])
    if sorted(by_sex["male"]) != ages:
        raise ValueError(f"{path}: female and male ages differ")
    width = ages[1] - ages[0]
    return StandardLifeTable([by_sex["female"][a] for a in ages],
                             [by_sex["male"][a] for a in ages], width)


def write_standard_life_table(table: StandardLifeTable, path) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["sex", "age_group_start", "lx"])
        for sex in ("female", "male"):
            for i, l in enumerate(table.lx(sex)):
                w.writerow([sex, i * table.age_width, repr(float(l))])
    return path


def bundled_standard() -> StandardLifeTable:
    with resources.as_file(resources.files("bayespop") / "data" / "standard_life_table.csv") as p:
        return read_standard_life_table(p)


def brass_lx(alpha, lx_std) -> np.ndarray:
    """Brass relational logit with slope 1: ``logit l = alpha + logit l_std``.

    ``alpha`` may be a vector; rows of the result follow it. ``l(0) = 1`` is kept.
    """
    alpha = np.atleast_1d(np.asarray(alpha, float))[:, None]
    ls = np.asarray(lx_std, float)[None, 1:]
    ys = 0.5 * np.log((1 - ls) / ls)
    with np.errstate(over="ignore"):
        l = 1.0 / (1.0 + np.exp(2.0 * (alpha + ys)))
    return np.concatenate([np.ones((alpha.shape[0], 1)), l], axis=1)


def _life_table(lx: np.ndarray, width: int):
    """Person-years per group (last group open) and e0 for rows of ``lx``.

    Closed groups use the trapezoid rule; the open group assumes the hazard
    of the last closed interval continues, ``L = l / mu``.
    """
    L = 0.5 * width * (lx[:, :-1] + lx[:, 1:])
    with np.errstate(divide="ignore", invalid="ignore"):
        mu = -np.log(lx[:, -1] / lx[:, -2]) / width
        L_open = np.where(mu > 0, lx[:, -1] / mu, np.inf)
    L = np.concatenate([L, L_open[:, None]], axis=1)
    return L, L.sum(axis=1) / lx[:, 0]


def _survival_from_L(L: np.ndarray, n_groups: int) -> np.ndarray:
    """Cohort survival ratios for ``n_groups`` groups, collapsing older ages into the open group."""
    if L.shape[1] < n_groups:
        raise ValueError(f"standard table has {L.shape[1]} groups, pyramid needs {n_groups}")
    Lc = np.concatenate([L[:, :n_groups - 1], L[:, n_groups - 1:].sum(axis=1, keepdims=True)],
                        axis=1)
    S = np.empty_like(Lc)
    S[:, :-2] = Lc[:, 1:-1] / Lc[:, :-2]
    S_open = Lc[:, -1] / (Lc[:, -2] + Lc[:, -1])
    S[:, -2] = S_open
    S[:, -1] = S_open
    return S


@dataclass(frozen=True)
class MortalityResult:
    alpha: np.ndarray
    e0: np.ndarray          # achieved
    survival: np.ndarray    # [n x n_groups]
    birth_survival: np.ndarray   # L0 / (width * l0): survival of births to period end


def e0_range(standard: StandardLifeTable, sex: str, bracket=ALPHA_BRACKET) -> tuple:
    _, e = _life_table(brass_lx(np.array([bracket[1], bracket[0]]), standard.lx(sex)),
                       standard.age_width)
    return float(e[0]), float(e[1])


def e0_to_survival_batch(targets, standard: StandardLifeTable, sex: str, n_groups: int,
                         tol: float = 1e-3, bracket=ALPHA_BRACKET) -> MortalityResult:
    """Invert e0 targets to Brass level shifts by vectorised bisection.

    e0 decreases monotonically in ``alpha``; bisection stops once every
    achieved e0 is within ``tol`` of its target (``tol`` well below the
    0.05-year guarantee).
    """
    targets = np.atleast_1d(np.asarray(targets, float))
    lx_std = standard.lx(sex)
    lo_e, hi_e = e0_range(standard, sex, bracket)
    bad = (targets < lo_e) | (targets > hi_e) | ~np.isfinite(targets)
    if np.any(bad):
        raise ValueError(f"e0 target {targets[bad][0]:.3f} outside the achievable span "
                         f"[{lo_e:.2f}, {hi_e:.2f}] of the {sex} standard")
    lo = np.full(targets.shape, bracket[0])
    hi = np.full(targets.shape, bracket[1])
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        _, e = _life_table(brass_lx(mid, lx_std), standard.age_width)
        done = np.abs(e - targets) < tol
        if np.all(done):
            break
        too_high = e > targets
        lo = np.where(too_high & ~done, mid, lo)
        hi = np.where(~too_high & ~done, mid, hi)
    lx = brass_lx(mid, lx_std)
    L, e = _life_table(lx, standard.age_width)
    if np.any(np.abs(e - targets) > E0_TOLERANCE):
        raise RuntimeError("e0 inversion failed to reach tolerance")
    return MortalityResult(mid, e, _survival_from_L(L, n_groups),
                           L[:, 0] / (standard.age_width * lx[:, 0]))


def e0_to_survival(e0_target: float, standard: StandardLifeTable, sex: str,
                   n_groups: int | None = None) -> np.ndarray:
    n = n_groups or standard.lx(sex).size
    return e0_to_survival_batch([e0_target], standard, sex, n).survival[0]


def survival_from_alpha(alpha, standard: StandardLifeTable, sex: str, n_groups: int | None = None):
    lx = brass_lx(alpha, standard.lx(sex))
    L, e = _life_table(lx, standard.age_width)
    return _survival_from_L(L, n_groups or lx.shape[1]), e


# --------------------------------------------------------------------------
# schedules and projection

def births_ratio(asfr_full: np.ndarray, female_survival: np.ndarray, birth_survival: float,
                 srb: float, width: int = AGE_WIDTH) -> np.ndarray:
    """Surviving female births per woman by mother's starting group.

    Births average the rate of the woman's group at the start and end of the
    period, ``width/2 (F_x + S_x F_{x+1})``, take the female share
    ``1 / (1 + srb)`` and survive to period end with ``birth_survival``.
    """
    F = np.asarray(asfr_full, float)
    nxt = np.append(F[1:], 0.0)
    return birth_survival * 0.5 * width * (F + female_survival * nxt) / (1.0 + srb)


def _assemble(asfr, mf: MortalityResult, mm: MortalityResult, rows, pattern, n_groups,
              migration, srb) -> list:
    out = []
    for t, j in enumerate(rows):
        F = pattern.full(asfr[j], n_groups)
        Sf, Sm = mf.survival[j], mm.survival[j]
        mig_f, mig_m = (None, None) if migration is None else migration[t]
        Bf = births_ratio(F, Sf, mf.birth_survival[j], srb, pattern.age_width)
        Bm = births_ratio(F, Sf, mm.birth_survival[j], srb, pattern.age_width)
        out.append((VitalSchedule(Bf, Sf, mig_f), VitalSchedule(Bm, Sm, mig_m)))
    return out


def build_period_schedules(tfr_path, e0f_path, e0m_path, pattern: FertilityAgePattern,
                           standard: StandardLifeTable, n_groups: int, migration=None,
                           srb: float = DEFAULT_SEX_RATIO_AT_BIRTH) -> list:
    """(female, male) VitalSchedules for each period of one joint trajectory.

    Male births are female births per woman survived with male infant
    survival; the engine scales them by ``srb``.
    """
    tfr_path = np.atleast_1d(np.asarray(tfr_path, float))
    H = tfr_path.size
    mf = e0_to_survival_batch(e0f_path, standard, "female", n_groups)
    mm = e0_to_survival_batch(e0m_path, standard, "male", n_groups)
    return _assemble(tfr_to_asfr(tfr_path, pattern), mf, mm, range(H), pattern, n_groups,
                     _expand_migration(migration, H), srb)


def _expand_migration(migration, horizon: int):
    """Accept None, one (female, male) pair for every period, or a per-period list."""
    if migration is None:
        return None
    if isinstance(migration, tuple) and len(migration) == 2 and np.ndim(migration[0]) == 1:
        return [migration] * horizon
    migration = list(migration)
    if len(migration) < horizon:
        raise ValueError(f"migration covers {len(migration)} periods, need {horizon}")
    return migration


DEFAULT_INDICATORS: Mapping[str, Callable] = {
    "total_population": total_population,
    "psr": potential_support_ratio,
    "median_age": median_age,
}


def run_probabilistic_projection(base: AgePyramid, tfr: TrajectorySet, e0_female: TrajectorySet,
                                 e0_male: TrajectorySet, pattern: FertilityAgePattern,
                                 standard: StandardLifeTable, migration=None,
                                 srb: float = DEFAULT_SEX_RATIO_AT_BIRTH,
                                 indicators: Mapping[str, Callable] | None = None,
                                 base_year: int | None = None) -> dict:
    """Project ``base`` once per joint trajectory and collect indicator trajectories.

    Rows are paired by trajectory id across the three inputs. Population
    indicators include the base period as their first column.
    """
    for ts in (e0_female, e0_male):
        if ts.values.shape != tfr.values.shape:
            raise ValueError(f"{ts.indicator}: shape {ts.values.shape} does not match "
                             f"tfr {tfr.values.shape}")
        if ts.trajectory_ids != tfr.trajectory_ids:
            raise ValueError(f"{ts.indicator}: trajectory ids differ from tfr; draws must be paired")
    indicators = dict(DEFAULT_INDICATORS if indicators is None else indicators)
    n, H = tfr.values.shape
    N = base.n_groups
    mig = _expand_migration(migration, H)
    if base_year is None:
        try:
            base_year = int(tfr.period_labels[0])
        except ValueError:
            base_year = 0
    labels = [str(base_year + AGE_WIDTH * t) for t in range(H + 1)]

    # invert all e0 values at once, then slice per trajectory
    mf = e0_to_survival_batch(e0_female.values.ravel(), standard, "female", N)
    mm = e0_to_survival_batch(e0_male.values.ravel(), standard, "male", N)
    asfr = tfr_to_asfr(tfr.values.ravel(), pattern)

    out_vals = {k: np.empty((n, H + 1)) for k in indicators}
    for i in range(n):
        schedules = _assemble(asfr, mf, mm, range(i * H, (i + 1) * H), pattern, N, mig, srb)
        res = project_horizon(base, schedules, H, srb, labels)
        for k, fn in indicators.items():
            out_vals[k][i] = res.indicator(fn)

    ids = tfr.trajectory_ids
    out = {k: TrajectorySet(k, v, labels, ids) for k, v in out_vals.items()}
    for ts, name in ((tfr, "tfr"), (e0_female, "e0_female"), (e0_male, "e0_male")):
        out[name] = TrajectorySet(name, ts.values, ts.period_labels, ids)
    return out
