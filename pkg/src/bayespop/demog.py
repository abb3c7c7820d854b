"""Cohort-component bookkeeping: age pyramids, Leslie matrices and projection.

Age groups are ``k`` years wide (default 5); group ``x`` (0-based) covers
ages ``[k*x, k*(x+1))`` and the last group is open-ended.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

DEFAULT_N_GROUPS = 21
AGE_WIDTH = 5
DEFAULT_SEX_RATIO_AT_BIRTH = 1.05
CLAMP_TOLERANCE = 1e-6


class DataQualityWarning(UserWarning):
    """Projection produced counts that had to be repaired (e.g. negative cohorts)."""


class UndefinedRatioError(ArithmeticError):
    """A ratio indicator has a zero denominator."""


def _frozen(a, name: str) -> np.ndarray:
    arr = np.array(a, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class AgePyramid:
    """Female and male counts by age group at a single time point."""

    counts_female: np.ndarray
    counts_male: np.ndarray
    age_width_years: int = AGE_WIDTH
    base_period_label: str = ""

    def __post_init__(self):
        f = _frozen(self.counts_female, "counts_female")
        m = _frozen(self.counts_male, "counts_male")
        if f.shape != m.shape:
            raise ValueError("female and male counts must have the same length")
        if f.size < 3:
            raise ValueError("an age pyramid needs at least 3 age groups")
        if not (np.all(np.isfinite(f)) and np.all(np.isfinite(m))):
            raise ValueError("counts must be finite")
        if np.any(f < 0) or np.any(m < 0):
            raise ValueError("counts must be non-negative")
        object.__setattr__(self, "counts_female", f)
        object.__setattr__(self, "counts_male", m)

    @property
    def n_groups(self) -> int:
        return self.counts_female.size

    @property
    def age_starts(self) -> np.ndarray:
        return np.arange(self.n_groups) * self.age_width_years

    @property
    def both_sexes(self) -> np.ndarray:
        return self.counts_female + self.counts_male


@dataclass(frozen=True)
class VitalSchedule:
    """Per-period ingredients of a Leslie matrix for one sex.

    ``births_surviving_ratio[x]`` is the number of surviving births credited
    to each woman of group ``x`` over the period. ``survival_ratio[x]`` is
    the share of group ``x`` alive one period later; the last two entries
    feed the open-ended group. ``net_migration`` is in persons, applied at
    the end of the period.
    """

    births_surviving_ratio: np.ndarray
    survival_ratio: np.ndarray
    net_migration: np.ndarray = None
    reproductive_groups: tuple[int, int] | None = None

    def __post_init__(self):
        b = _frozen(self.births_surviving_ratio, "births_surviving_ratio")
        s = _frozen(self.survival_ratio, "survival_ratio")
        mig = np.zeros_like(s) if self.net_migration is None else self.net_migration
        m = _frozen(mig, "net_migration")
        if not (b.shape == s.shape == m.shape):
            raise ValueError("schedule arrays must share one length")
        if not np.all(np.isfinite(np.concatenate([b, s, m]))):
            raise ValueError("schedule entries must be finite")
        if np.any(s < 0) or np.any(s > 1):
            raise ValueError("survival ratios must lie in [0, 1]")
        if np.any(b < 0):
            raise ValueError("births ratios must be non-negative")
        if self.reproductive_groups is not None:
            lo, hi = self.reproductive_groups
            outside = np.ones(b.size, dtype=bool)
            outside[lo:hi] = False
            if np.any(b[outside] != 0):
                raise ValueError("births ratios must be zero outside the reproductive ages")
        object.__setattr__(self, "births_surviving_ratio", b)
        object.__setattr__(self, "survival_ratio", s)
        object.__setattr__(self, "net_migration", m)

    @property
    def n_groups(self) -> int:
        return self.survival_ratio.size

    def with_migration(self, net_migration) -> "VitalSchedule":
        return VitalSchedule(self.births_surviving_ratio, self.survival_ratio,
                             net_migration, self.reproductive_groups)


@dataclass(frozen=True)
class ProjectionResult:
    pyramids: tuple
    period_labels: tuple = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "pyramids", tuple(self.pyramids))
        object.__setattr__(self, "period_labels", tuple(self.period_labels))

    @property
    def horizon(self) -> int:
        return len(self.pyramids) - 1

    def indicator(self, fn) -> np.ndarray:
        return np.array([fn(p) for p in self.pyramids])


def build_leslie_matrix(schedule: VitalSchedule) -> np.ndarray:
    """Leslie projection matrix: births on row 0, survival on the subdiagonal.

    The open-ended group keeps its own survivors, so the bottom-right corner
    holds both ``S[N-2]`` (at ``[N-1, N-2]``) and ``S[N-1]`` (at ``[N-1, N-1]``).
    """
    n = schedule.n_groups
    if n < 3:
        raise ValueError("Leslie matrix needs at least 3 groups")
    P = np.zeros((n, n))
    P[0, :] = schedule.births_surviving_ratio
    s = schedule.survival_ratio
    idx = np.arange(n - 1)
    P[idx + 1, idx] = s[: n - 1]
    P[n - 1, n - 1] = s[n - 1]
    return P


def _survive(counts: np.ndarray, survival: np.ndarray) -> np.ndarray:
    """Survivor counts for groups 1..N-1 (group 0 is filled by births)."""
    out = np.empty_like(counts)
    out[1:] = survival[:-1] * counts[:-1]
    out[-1] += survival[-1] * counts[-1]
    return out


def _clamp(counts: np.ndarray, label: str) -> np.ndarray:
    neg = counts < 0
    if not np.any(neg):
        return counts
    scale = max(float(np.sum(np.abs(counts))), 1.0)
    worst = float(-counts[neg].min())
    if worst > CLAMP_TOLERANCE * scale:
        warnings.warn(
            f"{label}: net emigration exceeds population in {int(neg.sum())} group(s) "
            f"(largest deficit {worst:.6g}); clamped to zero",
            DataQualityWarning,
            stacklevel=3,
        )
    return np.where(neg, 0.0, counts)


def project_one_period(
    pyramid: AgePyramid,
    schedule_female: VitalSchedule,
    schedule_male: VitalSchedule,
    sex_ratio_at_birth: float = DEFAULT_SEX_RATIO_AT_BIRTH,
    label: str = "",
) -> AgePyramid:
    """Advance a two-sex pyramid by one period.

    Female counts follow ``n' = P n + m``. Male births are the female-births
    total in ``schedule_male.births_surviving_ratio`` (already survived with
    male infant survival) scaled by ``sex_ratio_at_birth``; older male
    groups use the male survival ratios.
    """
    n = pyramid.n_groups
    if schedule_female.n_groups != n or schedule_male.n_groups != n:
        raise ValueError(
            f"dimension mismatch: pyramid has {n} groups, schedules have "
            f"{schedule_female.n_groups}/{schedule_male.n_groups}"
        )
    nf = pyramid.counts_female
    nm = pyramid.counts_male

    female = _survive(nf, schedule_female.survival_ratio)
    female[0] = schedule_female.births_surviving_ratio @ nf
    female += schedule_female.net_migration

    male = _survive(nm, schedule_male.survival_ratio)
    male[0] = sex_ratio_at_birth * (schedule_male.births_surviving_ratio @ nf)
    male += schedule_male.net_migration

    female = _clamp(female, f"{label} female".strip())
    male = _clamp(male, f"{label} male".strip())
    return AgePyramid(female, male, pyramid.age_width_years, label)


def project_horizon(
    base: AgePyramid,
    schedules: Sequence[tuple[VitalSchedule, VitalSchedule]],
    horizon: int,
    sex_ratio_at_birth: float = DEFAULT_SEX_RATIO_AT_BIRTH,
    period_labels: Sequence[str] | None = None,
) -> ProjectionResult:
    """Chain ``project_one_period`` over ``horizon`` periods.

    ``schedules[t]`` is a ``(female, male)`` pair used for period ``t``.
    """
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    if len(schedules) < horizon:
        raise ValueError(f"need {horizon} period schedules, got {len(schedules)}")
    if period_labels is None:
        period_labels = [base.base_period_label] + [f"t+{t}" for t in range(1, horizon + 1)]
    pyramids = [base]
    for t in range(horizon):
        sf, sm = schedules[t]
        pyramids.append(project_one_period(pyramids[-1], sf, sm, sex_ratio_at_birth,
                                           label=str(period_labels[t + 1])))
    return ProjectionResult(pyramids, period_labels)


def total_population(pyramid: AgePyramid) -> float:
    return float(pyramid.counts_female.sum() + pyramid.counts_male.sum())


def median_age(pyramid: AgePyramid) -> float:
    """Median age, interpolating linearly inside the containing group."""
    counts = pyramid.both_sexes
    total = counts.sum()
    if total <= 0:
        raise ValueError("median age of an empty pyramid is undefined")
    half = 0.5 * total
    cum = np.cumsum(counts)
    x = int(np.searchsorted(cum, half, side="left"))
    before = cum[x - 1] if x > 0 else 0.0
    width = pyramid.age_width_years
    return float(x * width + width * (half - before) / counts[x])


def potential_support_ratio(pyramid: AgePyramid) -> float:
    """Persons aged 20-64 per person aged 65 or over (both sexes)."""
    width = pyramid.age_width_years
    if 20 % width or 65 % width:
        raise ValueError("age groups must align with ages 20 and 65")
    lo, hi = 20 // width, 65 // width
    if pyramid.n_groups <= hi:
        raise ValueError("pyramid does not reach age 65")
    counts = pyramid.both_sexes
    old = counts[hi:].sum()
    if old <= 0:
        raise UndefinedRatioError("no population aged 65+: support ratio undefined")
    return float(counts[lo:hi].sum() / old)
