"""Total fertility rate models.

Three regimes are distinguished per country: Phase I (pre-transition, not
modelled), Phase II (the fertility transition, a double-logistic decline with
heteroscedastic normal errors, hierarchical over countries) and Phase III
(post-transition recovery, an AR(1) around a long-term mean). The
deterministic UN rules are provided as a comparison baseline.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .mcmc import HierarchicalModel
from .stats import norm_logpdf, truncnorm_logpdf

PHASES = ("I", "II", "III")
REPLACEMENT_TFR = 2.1
TWO_LN9 = 2 * np.log(9.0)
MIN_WIDTH = 0.05

# country-level Phase II parameters and their truncation bounds
PHASE2_PARAMS = ("D1", "D2", "D3", "D4", "d")
PHASE2_LOWER = np.array([MIN_WIDTH, 0.0, MIN_WIDTH, 0.0, 0.125])
PHASE2_UPPER = np.array([10.0, 10.0, 10.0, 10.0, 5.0])

# Phase III hierarchical hyperparameter supports
PHASE3_WORLD = ("mu_bar", "sigma_mu", "rho_bar", "sigma_rho", "sigma_eps")
PHASE3_WORLD_LOWER = np.zeros(5)
PHASE3_WORLD_UPPER = np.array([2.1, 0.318, 1.0, 0.289, 0.5])


# --------------------------------------------------------------------------
# data

@dataclass(frozen=True)
class TfrSeries:
    country_id: str
    values: np.ndarray
    period_start_years: np.ndarray
    phase_at: tuple | None = None

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        y = np.array(self.period_start_years, dtype=int)
        if v.shape != y.shape or v.ndim != 1:
            raise ValueError(f"{self.country_id}: values and periods must align")
        if not np.all(np.isfinite(v)) or np.any(v <= 0):
            raise ValueError(f"{self.country_id}: TFR values must be positive and finite")
        v.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "period_start_years", y)
        if self.phase_at is not None:
            ph = tuple(self.phase_at)
            if len(ph) != v.size or any(p not in PHASES for p in ph):
                raise ValueError(f"{self.country_id}: bad phase annotation")
            order = [PHASES.index(p) for p in ph]
            if any(b < a for a, b in zip(order, order[1:])):
                raise ValueError(f"{self.country_id}: phases must not move backwards")
            object.__setattr__(self, "phase_at", ph)

    def __len__(self):
        return self.values.size

    def truncated(self, before_year: int) -> "TfrSeries":
        keep = self.period_start_years < before_year
        return TfrSeries(self.country_id, self.values[keep], self.period_start_years[keep])

    @property
    def last_phase(self) -> str | None:
        return self.phase_at[-1] if self.phase_at else None

    def transitions(self, phase: str):
        """(f_t, f_{t+1}, year_t) for transitions starting in ``phase``."""
        if self.phase_at is None:
            raise ValueError("classify phases first")
        idx = [t for t in range(len(self) - 1) if self.phase_at[t] == phase]
        idx = np.array(idx, dtype=int)
        return self.values[idx], self.values[idx + 1], self.period_start_years[idx]


def phase3_start(values, threshold: float = 2.0) -> int | None:
    """Index of the first observation completing two consecutive increases below ``threshold``."""
    v = np.asarray(values, float)
    for i in range(2, v.size):
        if v[i - 2] < v[i - 1] < v[i] and v[i] < threshold:
            return i
    return None


def classify_phases(series: TfrSeries, decline_threshold: float = 0.5,
                    phase3_threshold: float = 2.0) -> TfrSeries:
    """Annotate each observation with its phase.

    Phase III starts at the observation that completes two consecutive
    five-year increases with TFR below ``phase3_threshold``. Phase II starts
    at the highest observation before that point, provided a decline of at
    least ``decline_threshold`` from it is seen later (still before Phase III).
    Everything earlier is Phase I.
    """
    v = series.values
    n = v.size
    p3 = phase3_start(v, phase3_threshold) if n >= 3 else None
    end = n if p3 is None else p3
    phases = ["I"] * n
    if end > 0:
        peak = int(np.argmax(v[:end]))
        if v[peak] - v[peak:end].min() >= decline_threshold - 1e-12:
            for t in range(peak, end):
                phases[t] = "II"
    if p3 is not None:
        for t in range(p3, n):
            phases[t] = "III"
    return replace(series, phase_at=tuple(phases))


# --------------------------------------------------------------------------
# Phase II

@dataclass(frozen=True)
class PhaseIIParams:
    """Country double-logistic parameters: TFR-range widths and maximum pace."""

    deltas: tuple
    d: float
    max_span: float = 40.0

    def __post_init__(self):
        deltas = tuple(float(x) for x in self.deltas)
        if len(deltas) != 4:
            raise ValueError("need four range widths")
        if min(deltas) < 0 or self.d < 0:
            raise ValueError("widths and pace must be non-negative")
        if sum(deltas) > self.max_span:
            raise ValueError("sum of widths exceeds the plausible TFR span")
        object.__setattr__(self, "deltas", deltas)

    def as_array(self) -> np.ndarray:
        return np.array(list(self.deltas) + [self.d])

    @classmethod
    def from_array(cls, a) -> "PhaseIIParams":
        return cls(tuple(a[:4]), float(a[4]))


def double_logistic_decrement(f, D1, D2, D3, D4, d, convention: str = "printed"):
    """Vectorised five-year TFR decrement, floored at zero.

    ``convention="printed"`` centres the first logistic at
    ``D2 + D3 + D4 - D1/2``; ``"upper"`` centres it at ``D2 + D3 + D4 + D1/2``
    (the midpoint of the top width when the transition starts at the sum of
    all four widths). The second logistic is centred at ``D4 + D3/2``.
    """
    D1 = np.maximum(D1, MIN_WIDTH)
    D3 = np.maximum(D3, MIN_WIDTH)
    if convention == "printed":
        mid1 = D2 + D3 + D4 - 0.5 * D1
    elif convention == "upper":
        mid1 = D2 + D3 + D4 + 0.5 * D1
    else:
        raise ValueError(f"unknown convention {convention!r}")
    mid2 = D4 + 0.5 * D3
    with np.errstate(over="ignore"):
        first = -d / (1 + np.exp(-TWO_LN9 * (f - mid1) / D1))
        second = d / (1 + np.exp(-TWO_LN9 * (f - mid2) / D3))
    return np.maximum(first + second, 0.0)


def phase2_decrement(f, params: PhaseIIParams, convention: str = "printed"):
    D1, D2, D3, D4 = params.deltas
    return double_logistic_decrement(f, D1, D2, D3, D4, params.d, convention)


@dataclass(frozen=True)
class ErrorSdConfig:
    """Tent-shaped error sd in TFR with an early-period multiplier."""

    sigma_max: float = 0.3
    f_peak: float = 4.0
    floor: float = 0.05
    f_low: float = 1.0
    f_high: float = 8.5
    early_factor: float = 1.5
    early_cutoff_year: int = 1975

    def __post_init__(self):
        if not (self.f_low < self.f_peak < self.f_high):
            raise ValueError("need f_low < f_peak < f_high")
        if not (0 < self.floor <= self.sigma_max):
            raise ValueError("need 0 < floor <= sigma_max")


def phase2_error_sd(f, year, cfg: ErrorSdConfig = ErrorSdConfig(), sigma_max=None):
    """Error sd of a Phase II five-year change at TFR ``f`` in period starting ``year``."""
    smax = cfg.sigma_max if sigma_max is None else sigma_max
    f = np.asarray(f, float)
    rise = np.clip((f - cfg.f_low) / (cfg.f_peak - cfg.f_low), 0, 1)
    fall = np.clip((cfg.f_high - f) / (cfg.f_high - cfg.f_peak), 0, 1)
    tent = np.minimum(rise, fall)
    sd = cfg.floor + (smax - cfg.floor) * tent
    early = np.asarray(year) < cfg.early_cutoff_year
    return np.where(early, cfg.early_factor * sd, sd)


@dataclass(frozen=True)
class PhaseIIWorld:
    """World locations and spreads of the five country parameters, plus the error scale."""

    means: tuple
    sds: tuple
    sigma_max: float = 0.3

    def __post_init__(self):
        if len(self.means) != 5 or len(self.sds) != 5:
            raise ValueError("need five means and five spreads")
        if min(self.sds) <= 0 or self.sigma_max <= 0:
            raise ValueError("spreads must be positive")

    def as_array(self) -> np.ndarray:
        return np.array(list(self.means) + list(self.sds) + [self.sigma_max])

    @classmethod
    def from_array(cls, a) -> "PhaseIIWorld":
        a = np.asarray(a, float)
        return cls(tuple(a[:5]), tuple(a[5:10]), float(a[10]))


def _pad(rows: Sequence[tuple]) -> tuple:
    """Stack ragged per-country (x, y, year) arrays into padded matrices and a mask."""
    n = max([len(r[0]) for r in rows] + [1])
    C = len(rows)
    X, Y = np.ones((C, n)), np.ones((C, n))
    YR = np.full((C, n), 2000, dtype=int)
    M = np.zeros((C, n), dtype=bool)
    for i, (x, y, yr) in enumerate(rows):
        k = len(x)
        X[i, :k], Y[i, :k], YR[i, :k], M[i, :k] = x, y, yr, True
    return X, Y, YR, M


class Phase2Model(HierarchicalModel):
    """Bayesian hierarchical double-logistic model for Phase II decline.

    Country parameters ``(D1..D4, d)`` are independent truncated normals given
    world locations/spreads; the world has uniform priors on locations over
    the country support, on spreads, and on the error scale ``sigma_max``.
    """

    name = "tfr-phase2"
    version = "1"
    param_names = PHASE2_PARAMS
    country_lower = PHASE2_LOWER
    country_upper = PHASE2_UPPER

    def __init__(self, series: Sequence[TfrSeries], error_cfg: ErrorSdConfig = ErrorSdConfig(),
                 convention: str = "printed", spread_max=(5.0, 5.0, 5.0, 5.0, 2.5),
                 sigma_max_bounds=(0.06, 1.5)):
        series = [s if s.phase_at is not None else classify_phases(s) for s in series]
        rows = [s.transitions("II") for s in series]
        keep = [i for i, r in enumerate(rows) if len(r[0]) > 0]
        if not keep:
            raise ValueError("no Phase II transitions in the data")
        self.series = [series[i] for i in keep]
        self.country_ids = tuple(s.country_id for s in self.series)
        self.X, self.Y, self.YR, self.M = _pad([rows[i] for i in keep])
        self.error_cfg = error_cfg
        self.convention = convention
        self.world_names = tuple([f"mean_{p}" for p in PHASE2_PARAMS]
                                 + [f"sd_{p}" for p in PHASE2_PARAMS] + ["sigma_max"])
        self.world_lower = np.concatenate([PHASE2_LOWER, np.zeros(5), [sigma_max_bounds[0]]])
        self.world_upper = np.concatenate([PHASE2_UPPER, np.asarray(spread_max, float),
                                           [sigma_max_bounds[1]]])
        self.early = self.YR < error_cfg.early_cutoff_year

    def initial_world(self):
        return np.array([1.0, 1.5, 1.0, 1.8, 0.8, 1.0, 1.0, 1.0, 0.5, 0.3, self.error_cfg.sigma_max])

    def initial_country(self, world):
        return np.tile(world[:5], (len(self.country_ids), 1))

    def world_proposal_scales(self):
        return np.array([0.2] * 5 + [0.1] * 5 + [0.01])

    def country_proposal_scales(self):
        return np.array([0.2, 0.2, 0.2, 0.1, 0.05])

    def country_terms(self, world, country):
        world = np.asarray(world, float)
        country = np.asarray(country, float)
        means, sds, smax = world[:5], world[5:10], world[10]
        if np.any(sds <= 0) or smax <= self.error_cfg.floor:
            return np.full(len(self.country_ids), -np.inf)
        D1, D2, D3, D4, d = (country[:, j:j + 1] for j in range(5))
        r = double_logistic_decrement(self.X, D1, D2, D3, D4, d, self.convention)
        sd = phase2_error_sd(self.X, self.YR, self.error_cfg, smax)
        ll = np.where(self.M, norm_logpdf(self.Y - self.X + r, 0.0, sd), 0.0).sum(axis=1)
        prior = truncnorm_logpdf(country, means, sds, PHASE2_LOWER, PHASE2_UPPER).sum(axis=1)
        return ll + prior


def phase2_loglik(series: Sequence[TfrSeries], params: Sequence[PhaseIIParams],
                  world: PhaseIIWorld, error_cfg: ErrorSdConfig = ErrorSdConfig(),
                  convention: str = "printed") -> float:
    """Joint log density of the Phase II model at the given parameter values."""
    model = Phase2Model(series, error_cfg, convention)
    by_id = {s.country_id: p for s, p in zip(series, params)}
    country = np.array([by_id[c].as_array() for c in model.country_ids])
    return model.log_density(world.as_array(), country)


# --------------------------------------------------------------------------
# Phase III

@dataclass(frozen=True)
class PhaseIIIParams:
    """AR(1) recovery parameters for one country: mean, autocorrelation, innovation sd."""

    mu: float = REPLACEMENT_TFR
    rho: float = 0.89
    sigma: float = 0.10

    def __post_init__(self):
        if self.mu < 0 or not (0 <= self.rho <= 1) or self.sigma < 0:
            raise ValueError("need mu >= 0, 0 <= rho <= 1, sigma >= 0")


@dataclass(frozen=True)
class PhaseIIIWorld:
    mu_bar: float
    sigma_mu: float
    rho_bar: float
    sigma_rho: float
    sigma_eps: float

    def __post_init__(self):
        a = self.as_array()
        if np.any(a < PHASE3_WORLD_LOWER) or np.any(a > PHASE3_WORLD_UPPER):
            raise ValueError("Phase III hyperparameters outside their prior support")

    def as_array(self) -> np.ndarray:
        return np.array([self.mu_bar, self.sigma_mu, self.rho_bar, self.sigma_rho, self.sigma_eps])


def phase3_transitions(series: Sequence[TfrSeries]):
    rows = []
    for s in series:
        s = s if s.phase_at is not None else classify_phases(s)
        rows.append(s.transitions("III"))
    return rows


def ar1_loglik(prev, nxt, mu, rho, sigma) -> float:
    prev, nxt = np.asarray(prev, float), np.asarray(nxt, float)
    return float(norm_logpdf(nxt - mu - rho * (prev - mu), 0.0, sigma).sum())


@dataclass(frozen=True)
class Phase3Fit:
    rho: float
    sigma: float
    mu: float
    n_transitions: int
    n_countries: int
    se_rho: float
    se_sigma: float
    rho_at_boundary: bool = False
    sigma_at_boundary: bool = False

    def params(self) -> PhaseIIIParams:
        return PhaseIIIParams(self.mu, self.rho, self.sigma)

    def interval(self, which: str, level_z: float = 1.959963984540054):
        est, se = (self.rho, self.se_rho) if which == "rho" else (self.sigma, self.se_sigma)
        return est - level_z * se, est + level_z * se

    def to_dict(self) -> dict:
        return {k: (float(v) if isinstance(v, (float, np.floating)) else v)
                for k, v in self.__dict__.items()}


def phase3_mle(series: Sequence[TfrSeries], mu: float = REPLACEMENT_TFR,
               rho_max: float = 1.0 - 1e-9) -> Phase3Fit:
    """Conditional maximum likelihood for the fixed-mean Phase III AR(1).

    The Gaussian likelihood is quadratic in ``rho`` for fixed ``mu``, so the
    profile maximum is the through-origin regression slope, clipped to
    ``[0, rho_max]``; ``sigma`` is the root mean squared residual.
    """
    rows = phase3_transitions(series)
    prev = np.concatenate([r[0] for r in rows]) if rows else np.zeros(0)
    nxt = np.concatenate([r[1] for r in rows]) if rows else np.zeros(0)
    n = prev.size
    if n < 2:
        raise ValueError(f"need at least 2 Phase III transitions, got {n}")
    x, y = prev - mu, nxt - mu
    sxx = float(x @ x)
    raw = float(x @ y) / sxx if sxx > 0 else 0.0
    rho = min(max(raw, 0.0), rho_max)
    resid = y - rho * x
    sigma = float(np.sqrt(resid @ resid / n))
    se_rho = sigma / np.sqrt(sxx) if sxx > 0 else np.inf
    return Phase3Fit(
        rho=rho, sigma=sigma, mu=mu, n_transitions=n,
        n_countries=sum(1 for r in rows if len(r[0])),
        se_rho=float(se_rho), se_sigma=sigma / np.sqrt(2 * n),
        rho_at_boundary=raw != rho, sigma_at_boundary=sigma < 1e-8,
    )


class Phase3HierModel(HierarchicalModel):
    """Phase III AR(1) with country-specific mean and autocorrelation.

    mu_c ~ TN[0, inf)(mu_bar, sigma_mu^2), rho_c ~ TN[0, 1](rho_bar, sigma_rho^2),
    uniform hyperpriors on the bounded supports in ``PHASE3_WORLD_UPPER``.
    """

    name = "tfr-phase3-hier"
    version = "1"
    world_names = PHASE3_WORLD
    world_lower = PHASE3_WORLD_LOWER
    world_upper = PHASE3_WORLD_UPPER
    param_names = ("mu", "rho")
    country_lower = np.array([0.0, 0.0])
    country_upper = np.array([np.inf, 1.0])

    def __init__(self, series: Sequence[TfrSeries], include_country_ids: Sequence[str] | None = None):
        series = [s if s.phase_at is not None else classify_phases(s) for s in series]
        rows = [s.transitions("III") for s in series]
        keep = [i for i, r in enumerate(rows) if len(r[0]) > 0]
        if not keep:
            raise ValueError("no Phase III transitions in the data")
        self.series = [series[i] for i in keep]
        self.country_ids = tuple(s.country_id for s in self.series)
        self.X, self.Y, _, self.M = _pad([rows[i] for i in keep])
        last = np.array([r[1][-1] for r in (rows[i] for i in keep)])
        self._init_mu = float(np.clip(np.mean(last), 0.5, 2.0))

    def initial_world(self):
        return np.array([self._init_mu, 0.15, 0.8, 0.1, 0.1])

    def initial_country(self, world):
        C = len(self.country_ids)
        return np.column_stack([np.full(C, world[0]), np.full(C, world[2])])

    def world_proposal_scales(self):
        return np.array([0.05, 0.02, 0.05, 0.02, 0.01])

    def country_proposal_scales(self):
        return np.array([0.1, 0.05])

    def country_terms(self, world, country):
        mu_bar, s_mu, rho_bar, s_rho, s_eps = np.asarray(world, float)
        if s_mu <= 0 or s_rho <= 0 or s_eps <= 0:
            return np.full(len(self.country_ids), -np.inf)
        mu = country[:, 0:1]
        rho = country[:, 1:2]
        resid = self.Y - mu - rho * (self.X - mu)
        ll = np.where(self.M, norm_logpdf(resid, 0.0, s_eps), 0.0).sum(axis=1)
        prior = (truncnorm_logpdf(country[:, 0], mu_bar, s_mu, 0.0, np.inf)
                 + truncnorm_logpdf(country[:, 1], rho_bar, s_rho, 0.0, 1.0))
        return ll + prior


def phase3_hier_terms(series, world: np.ndarray, mu_c, rho_c) -> dict:
    """Likelihood, country-prior and hyperprior parts of the Phase III hierarchical density."""
    model = Phase3HierModel(series)
    world = np.asarray(world, float)
    hyper = model.hyper_log_prior(world)
    mu_c, rho_c = np.broadcast_to(mu_c, (len(model.country_ids),)), np.broadcast_to(rho_c, (len(model.country_ids),))
    if not np.isfinite(hyper) or np.any(mu_c < 0) or np.any((rho_c < 0) | (rho_c > 1)):
        return {"likelihood": -np.inf, "country_prior": -np.inf, "hyper": -np.inf}
    resid = model.Y - mu_c[:, None] - rho_c[:, None] * (model.X - mu_c[:, None])
    ll = float(np.where(model.M, norm_logpdf(resid, 0.0, world[4]), 0.0).sum())
    prior = float(np.sum(truncnorm_logpdf(mu_c, world[0], world[1], 0.0, np.inf)
                         + truncnorm_logpdf(rho_c, world[2], world[3], 0.0, 1.0)))
    return {"likelihood": ll, "country_prior": prior, "hyper": hyper}


def phase3_hier_loglik(series, world, mu_c, rho_c) -> float:
    """Joint log density of the hierarchical Phase III model; -inf outside the prior support."""
    world = world.as_array() if isinstance(world, PhaseIIIWorld) else np.asarray(world, float)
    if np.any(world < PHASE3_WORLD_LOWER) or np.any(world > PHASE3_WORLD_UPPER) or np.any(world[[1, 3, 4]] <= 0):
        return -np.inf
    parts = phase3_hier_terms(series, world, mu_c, rho_c)
    total = sum(parts.values())
    return total if np.isfinite(total) else -np.inf


# --------------------------------------------------------------------------
# simulation

@dataclass(frozen=True)
class TfrDraw:
    """Parameters needed to simulate one country's future TFR."""

    phase3: PhaseIIIParams = field(default_factory=PhaseIIIParams)
    phase2: PhaseIIParams | None = None
    sigma_max: float | None = None
    draw_id: str = ""


def simulate_tfr_trajectory(current: float, phase: str, draw: TfrDraw, horizon: int,
                            rng: np.random.Generator, history: Sequence[float] = (),
                            start_year: int = 2010, floor: float = 0.5,
                            error_cfg: ErrorSdConfig = ErrorSdConfig(),
                            convention: str = "printed", noise: bool = True) -> np.ndarray:
    """Simulate ``horizon`` future five-year TFR values after ``current``.

    Phase II follows the double-logistic decline with normal errors until two
    consecutive increases below 2 occur, then the AR(1) recovery applies.
    ``history`` holds observations preceding ``current`` (most recent last)
    so the switch can fire on the first simulated step. ``noise=False`` gives
    the deterministic mean path without touching ``rng``.
    """
    path = np.empty(max(horizon, 0))
    if horizon <= 0:
        return path
    if phase == "I":
        raise ValueError("Phase I trajectories are not modelled")
    if phase == "II" and draw.phase2 is None:
        raise ValueError("Phase II simulation needs Phase II parameters")
    recent = list(history[-2:]) + [current]
    in_phase3 = phase == "III"
    f = current
    p3 = draw.phase3
    for t in range(horizon):
        year = start_year + 5 * t
        if in_phase3:
            e = rng.standard_normal() if noise else 0.0
            nxt = p3.mu + p3.rho * (f - p3.mu) + p3.sigma * e
        else:
            r = float(phase2_decrement(f, draw.phase2, convention))
            sd = float(phase2_error_sd(f, year, error_cfg, draw.sigma_max))
            e = rng.standard_normal() if noise else 0.0
            nxt = f - r + sd * e
        nxt = max(nxt, floor)
        path[t] = nxt
        recent = (recent + [nxt])[-3:]
        if not in_phase3 and len(recent) == 3 and phase3_start(recent) == 2:
            in_phase3 = True
        f = nxt
    return path


def simulate_phase3_batch(current, mu, rho, sigma, horizon: int, rng: np.random.Generator,
                          n: int | None = None, floor: float = 0.5) -> np.ndarray:
    """Vectorised Phase III paths: returns an ``n x horizon`` array.

    ``current``, ``mu``, ``rho`` and ``sigma`` broadcast over trajectories,
    so each row can carry its own posterior draw. Per row the random stream
    and the floor match :func:`simulate_tfr_trajectory` in Phase III.
    """
    arrs = np.broadcast_arrays(*(np.asarray(a, float) for a in (current, mu, rho, sigma)))
    if n is None:
        n = arrs[0].size
    f, mu, rho, sigma = (np.broadcast_to(a.ravel() if a.ndim else a, (n,)).copy() for a in arrs)
    out = np.empty((n, horizon))
    for t in range(horizon):
        f = np.maximum(mu + rho * (f - mu) + sigma * rng.standard_normal(n), floor)
        out[:, t] = f
    return out


# --------------------------------------------------------------------------
# deterministic UN baseline

# Illustrative fast/medium/slow decline shapes; the UN's own parameter values are not published
UN_PATTERNS = {
    "fast": PhaseIIParams((2.0, 3.5, 1.0, 1.5), 1.0),
    "medium": PhaseIIParams((2.0, 3.5, 1.0, 1.5), 0.7),
    "slow": PhaseIIParams((2.0, 3.5, 1.0, 1.5), 0.45),
}


def un_deterministic_tfr(current: float, pattern: str | PhaseIIParams = "medium",
                         horizon: int = 18, ultimate: float = 1.85, step: float = 0.05,
                         variant_offset: float = 0.5, convention: str = "upper") -> dict:
    """Medium/High/Low deterministic TFR paths under the UN rules.

    Above ``ultimate`` the TFR falls by the pattern's decrement (never below
    ``ultimate``); below it the TFR rises by ``step`` per period until it
    reaches ``ultimate``; at ``ultimate`` it is held constant. High and Low
    add and subtract ``variant_offset`` in every period.
    """
    params = UN_PATTERNS[pattern] if isinstance(pattern, str) else pattern
    medium = np.empty(horizon)
    f = float(current)
    for t in range(horizon):
        if f > ultimate:
            f = max(f - float(phase2_decrement(f, params, convention)), ultimate)
        elif f < ultimate:
            f = min(round(f + step, 10), ultimate)
        medium[t] = f
    # rounding keeps the variants on the same decimal grid as the medium path
    return {"medium": medium, "high": np.round(medium + variant_offset, 10),
            "low": np.round(medium - variant_offset, 10)}
