"""Life expectancy at birth: female gains and the female-male gap.

Female e0 follows a random walk with drift given by a double-logistic gain
curve whose parameters are country-specific draws from a world distribution.
Male e0 is female e0 minus a gap projected with a t-error regression fitted by
maximum likelihood.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .mcmc import HierarchicalModel
from .stats import norm_logpdf, student_t_logpdf, truncnorm_logpdf

log = logging.getLogger(__name__)

E0_MIN, E0_MAX = 15.0, 110.0
MIN_WIDTH = 0.05

E0_PARAMS = ("Delta1", "Delta2", "Delta3", "Delta4", "k", "z")
E0_LOWER = np.zeros(6)
E0_UPPER = np.array([100.0, 100.0, 100.0, 100.0, 10.0, 1.15])
Z_MAX = 1.15


@dataclass(frozen=True)
class E0Series:
    country_id: str
    female_e0: np.ndarray
    male_e0: np.ndarray
    period_start_years: np.ndarray

    def __post_init__(self):
        f = np.array(self.female_e0, dtype=float)
        m = np.array(self.male_e0, dtype=float)
        y = np.array(self.period_start_years, dtype=int)
        if not (f.shape == m.shape == y.shape) or f.ndim != 1:
            raise ValueError(f"{self.country_id}: female, male and periods must align")
        for name, a in (("female", f), ("male", m)):
            if not np.all(np.isfinite(a)) or np.any(a < 15) or np.any(a > 100):
                raise ValueError(f"{self.country_id}: {name} e0 outside [15, 100]")
        for a in (f, m, y):
            a.setflags(write=False)
        object.__setattr__(self, "female_e0", f)
        object.__setattr__(self, "male_e0", m)
        object.__setattr__(self, "period_start_years", y)

    def __len__(self):
        return self.female_e0.size

    @property
    def gap(self) -> np.ndarray:
        return self.female_e0 - self.male_e0

    @property
    def l1950_imputed(self) -> bool:
        return not np.any(self.period_start_years == 1950)

    @property
    def l1950(self) -> float:
        """Female e0 in 1950-1955, or the earliest observation if the series starts later."""
        hit = np.flatnonzero(self.period_start_years == 1950)
        if hit.size:
            return float(self.female_e0[hit[0]])
        return float(self.female_e0[np.argmin(self.period_start_years)])

    def truncated(self, before_year: int) -> "E0Series":
        keep = self.period_start_years < before_year
        return E0Series(self.country_id, self.female_e0[keep], self.male_e0[keep],
                        self.period_start_years[keep])


# --------------------------------------------------------------------------
# gain curve

@dataclass(frozen=True)
class DoubleLogisticParams:
    """Country gain-curve parameters: four e0 spans, early gain k, asymptotic gain z."""

    deltas: tuple
    k: float
    z: float

    def __post_init__(self):
        deltas = tuple(float(x) for x in self.deltas)
        if len(deltas) != 4:
            raise ValueError("need four spans")
        a = np.array(deltas + (self.k, self.z))
        if np.any(a < E0_LOWER) or np.any(a > E0_UPPER):
            raise ValueError("gain parameters outside their support")
        object.__setattr__(self, "deltas", deltas)

    def as_array(self) -> np.ndarray:
        return np.array(list(self.deltas) + [self.k, self.z])

    @classmethod
    def from_array(cls, a) -> "DoubleLogisticParams":
        return cls(tuple(a[:4]), float(a[4]), float(a[5]))


def double_logistic_gain(l, D1, D2, D3, D4, k, z, A1=4.4, A2=0.5):
    """Vectorised five-year gain in female e0 at level ``l``.

    Zero spans in the two logistic widths are floored at ``MIN_WIDTH``.
    """
    D2w = np.maximum(D2, MIN_WIDTH)
    D4w = np.maximum(D4, MIN_WIDTH)
    with np.errstate(over="ignore"):
        first = k / (1 + np.exp(-A1 * (l - D1 - A2 * D2w) / D2w))
        second = (z - k) / (1 + np.exp(-A1 * (l - D1 - D2 - D3 - A2 * D4w) / D4w))
    return first + second


def e0_gain(l, params: DoubleLogisticParams, A1: float = 4.4, A2: float = 0.5):
    D1, D2, D3, D4 = params.deltas
    return double_logistic_gain(l, D1, D2, D3, D4, params.k, params.z, A1, A2)


@dataclass(frozen=True)
class OmegaConfig:
    """Error sd as a logistic decay in e0: ``lo + (hi - lo) / (1 + exp((l - center)/scale))``."""

    hi: float = 1.0
    lo: float = 0.2
    center: float = 65.0
    scale: float = 5.0

    def __post_init__(self):
        if not (0 < self.lo <= self.hi) or self.scale <= 0:
            raise ValueError("need 0 < lo <= hi and scale > 0")


def e0_error_sd(l, cfg: OmegaConfig = OmegaConfig()):
    l = np.asarray(l, float)
    with np.errstate(over="ignore"):
        return cfg.lo + (cfg.hi - cfg.lo) / (1 + np.exp((l - cfg.center) / cfg.scale))


# --------------------------------------------------------------------------
# hierarchical model

@dataclass(frozen=True)
class E0World:
    """World means and spreads of the six gain parameters plus fixed constants."""

    means: tuple
    sds: tuple
    A1: float = 4.4
    A2: float = 0.5
    omega: OmegaConfig = field(default_factory=OmegaConfig)

    def __post_init__(self):
        if len(self.means) != 6 or len(self.sds) != 6:
            raise ValueError("need six means and six spreads")
        if min(self.sds) <= 0:
            raise ValueError("spreads must be positive")
        if not (0 <= self.means[5] <= Z_MAX):
            raise ValueError(f"z world mean must lie in [0, {Z_MAX}]")

    def as_array(self) -> np.ndarray:
        return np.array(list(self.means) + list(self.sds))


class E0Model(HierarchicalModel):
    """Bayesian hierarchical double-logistic model for female e0 gains."""

    name = "e0"
    version = "1"
    param_names = E0_PARAMS
    country_lower = E0_LOWER
    country_upper = E0_UPPER

    def __init__(self, series: Sequence[E0Series], A1: float = 4.4, A2: float = 0.5,
                 omega: OmegaConfig = OmegaConfig(), spread_max=(50, 50, 50, 50, 5, 1)):
        series = [s for s in series if len(s) >= 2]
        if not series:
            raise ValueError("no e0 transitions in the data")
        self.series = list(series)
        self.country_ids = tuple(s.country_id for s in series)
        n = max(len(s) for s in series) - 1
        C = len(series)
        self.X, self.Y = np.full((C, n), 60.0), np.full((C, n), 60.0)
        self.M = np.zeros((C, n), dtype=bool)
        for i, s in enumerate(series):
            m = len(s) - 1
            self.X[i, :m], self.Y[i, :m], self.M[i, :m] = s.female_e0[:-1], s.female_e0[1:], True
        self.A1, self.A2, self.omega = A1, A2, omega
        self.sd = e0_error_sd(self.X, omega)
        self.world_names = tuple([f"mean_{p}" for p in E0_PARAMS] + [f"sd_{p}" for p in E0_PARAMS])
        self.world_lower = np.concatenate([E0_LOWER, np.zeros(6)])
        self.world_upper = np.concatenate([E0_UPPER, np.asarray(spread_max, float)])

    def initial_world(self):
        return np.array([40.0, 10.0, 15.0, 10.0, 3.0, 0.6, 10.0, 5.0, 5.0, 5.0, 1.0, 0.2])

    def initial_country(self, world):
        return np.tile(world[:6], (len(self.country_ids), 1))

    def world_proposal_scales(self):
        return np.array([2.0, 1.0, 1.0, 1.0, 0.2, 0.05, 1.0, 0.5, 0.5, 0.5, 0.1, 0.05])

    def country_proposal_scales(self):
        return np.array([2.0, 1.0, 1.0, 1.0, 0.2, 0.05])

    def country_terms(self, world, country):
        world = np.asarray(world, float)
        country = np.asarray(country, float)
        means, sds = world[:6], world[6:]
        if np.any(sds <= 0):
            return np.full(len(self.country_ids), -np.inf)
        cols = [country[:, j:j + 1] for j in range(6)]
        g = double_logistic_gain(self.X, *cols, A1=self.A1, A2=self.A2)
        ll = np.where(self.M, norm_logpdf(self.Y - self.X - g, 0.0, self.sd), 0.0).sum(axis=1)
        prior = truncnorm_logpdf(country, means, sds, E0_LOWER, E0_UPPER).sum(axis=1)
        return ll + prior


def e0_hier_loglik(series: Sequence[E0Series], params: Sequence[DoubleLogisticParams],
                   world: E0World) -> float:
    """Joint log density of the female e0 model at the given parameter values."""
    model = E0Model(series, world.A1, world.A2, world.omega)
    by_id = {s.country_id: p for s, p in zip(series, params)}
    country = np.array([by_id[c].as_array() for c in model.country_ids])
    return model.log_density(world.as_array(), country)


# --------------------------------------------------------------------------
# gap model

@dataclass(frozen=True)
class GapParams:
    """Gap regression: below ``M`` a linear model in (1, l1950, G, l, (l-75)+), above it ``gamma1 G``.

    ``sigma2`` is the squared scale of the t errors (the variance is infinite for ``nu = 2``).
    """

    beta: tuple = (0.0, 0.0, 1.0, 0.0, 0.0)
    gamma1: float = 1.0
    sigma2: float = 0.0665
    nu: float = 2.0
    M: float = 86.2
    cap: float = 18.0

    def __post_init__(self):
        if len(self.beta) != 5:
            raise ValueError("need five beta coefficients")
        if self.cap <= 0 or self.nu <= 0 or self.sigma2 <= 0:
            raise ValueError("need cap, nu and sigma2 positive")
        object.__setattr__(self, "beta", tuple(float(b) for b in self.beta))

    @property
    def scale(self) -> float:
        return float(np.sqrt(self.sigma2))

    def to_dict(self) -> dict:
        return {"beta": list(self.beta), "gamma1": self.gamma1, "sigma2": self.sigma2,
                "nu": self.nu, "M": self.M, "cap": self.cap}


def gap_design(G, l, l1950) -> np.ndarray:
    G, l, l1950 = np.broadcast_arrays(*(np.asarray(a, float) for a in (G, l, l1950)))
    return np.stack([np.ones_like(G), l1950, G, l, np.maximum(l - 75.0, 0.0)], axis=-1)


def gap_mean(G, l, l1950, params: GapParams):
    """Conditional centre of the uncensored next-period gap."""
    below = gap_design(G, l, l1950) @ np.asarray(params.beta)
    return np.where(np.asarray(l) > params.M, params.gamma1 * np.asarray(G, float), below)


def project_gap(G, l_female, l_1950, params: GapParams, rng: np.random.Generator | None = None,
                error=None):
    """One-period gap projection, clamped to ``[0, cap]``.

    ``error`` overrides the t draw (pass 0 for the deterministic path).
    """
    if error is None:
        error = params.scale * rng.standard_t(params.nu, size=np.shape(G))
    g_star = gap_mean(G, l_female, l_1950, params) + error
    return np.minimum(np.maximum(g_star, 0.0), params.cap)


@dataclass(frozen=True)
class GapFit:
    params: GapParams
    converged: bool
    grad_norm: float
    n_below: int
    n_above: int
    iterations: int
    imputed_l1950: tuple = ()
    gamma1_defaulted: bool = False

    def to_dict(self) -> dict:
        return {**self.params.to_dict(), "converged": self.converged,
                "grad_norm": self.grad_norm, "n_below": self.n_below, "n_above": self.n_above,
                "iterations": self.iterations, "imputed_l1950": list(self.imputed_l1950),
                "gamma1_defaulted": self.gamma1_defaulted}


def gap_rows(series: Sequence[E0Series]):
    """Stack (G_t, l_t, l1950, G_{t+1}) over all country transitions."""
    G, l, l0, y = [], [], [], []
    for s in series:
        gap = s.gap
        G.append(gap[:-1])
        l.append(s.female_e0[:-1])
        l0.append(np.full(len(s) - 1, s.l1950))
        y.append(gap[1:])
    cat = lambda parts: np.concatenate(parts) if parts else np.zeros(0)
    return cat(G), cat(l), cat(l0), cat(y)


def _t_regression(X, y, s2, nu, tol, max_iter):
    """Maximise sum log t_nu((y - X b)/s) over b: IRLS start, Newton polish.

    Returns (b, grad_norm, iterations).
    """
    b = np.linalg.lstsq(X, y, rcond=None)[0]

    def grad_hess(b):
        r = y - X @ b
        den = nu * s2 + r * r
        g = X.T @ ((nu + 1) * r / den)
        h = -(X.T * ((nu + 1) * (nu * s2 - r * r) / den ** 2)) @ X
        return g, h

    it = 0
    for it in range(1, max_iter + 1):
        g, h = grad_hess(b)
        gn = float(np.linalg.norm(g))
        if gn < tol:
            return b, gn, it
        step = None
        try:
            # Newton only when the Hessian is negative definite
            np.linalg.cholesky(-h)
            step = np.linalg.solve(-h, g)
        except np.linalg.LinAlgError:
            pass
        if step is None or it <= 20:
            r = y - X @ b
            w = (nu + 1) / (nu + r * r / s2)
            Xw = X * w[:, None]
            step = np.linalg.solve(X.T @ Xw, Xw.T @ y) - b
        b = b + step
    g, _ = grad_hess(b)
    return b, float(np.linalg.norm(g)), it


def fit_gap_mle(series: Sequence[E0Series], sigma2: float = 0.0665, nu: float = 2.0,
                M: float = 86.2, cap: float = 18.0, gamma1_default: float = 1.0,
                tol: float = 1e-8, max_iter: int = 500, min_rows: int = 30) -> GapFit:
    """Maximum likelihood for the gap regression with the t scale held fixed.

    The two regimes share no coefficients, so beta and gamma1 are fitted
    separately. Each fit starts from least squares, runs iteratively
    reweighted least squares and finishes with Newton steps until the
    gradient norm falls below ``tol``. Clamping at 0 and ``cap`` is ignored
    in the likelihood. ``gamma1`` falls back to ``gamma1_default`` when no
    transition starts above ``M``.
    """
    G, l, l0, y = gap_rows(series)
    n = G.size
    if n < min_rows:
        raise ValueError(f"need at least {min_rows} gap transitions, got {n}")
    above = l > M
    Xb = gap_design(G[~above], l[~above], l0[~above])
    if (~above).sum() < 5 or np.linalg.matrix_rank(Xb) < 5:
        raise ValueError("gap regression below M is not identifiable from these data")
    beta, gn_b, it_b = _t_regression(Xb, y[~above], sigma2, nu, tol, max_iter)
    gamma1, gn_g, it_g, defaulted = gamma1_default, 0.0, 0, True
    if above.any():
        g1, gn_g, it_g = _t_regression(G[above, None], y[above], sigma2, nu, tol, max_iter)
        gamma1, defaulted = float(g1[0]), False
    grad = float(np.hypot(gn_b, gn_g))
    converged = grad < tol * np.sqrt(2)
    if not converged:
        warnings.warn(f"gap MLE did not converge: gradient norm {grad:.3g}", RuntimeWarning)
    imputed = tuple(s.country_id for s in series if s.l1950_imputed)
    params = GapParams(tuple(beta), gamma1, sigma2, nu, M, cap)
    return GapFit(params, converged, grad, int((~above).sum()), int(above.sum()),
                  max(it_b, it_g), imputed, defaulted)


def gap_loglik(series: Sequence[E0Series], params: GapParams) -> float:
    G, l, l0, y = gap_rows(series)
    return float(student_t_logpdf(y - gap_mean(G, l, l0, params), params.scale, params.nu).sum())


# --------------------------------------------------------------------------
# simulation

@dataclass(frozen=True)
class E0Draw:
    params: DoubleLogisticParams
    l1950: float
    draw_id: int = -1


def simulate_e0_trajectory(l0_female: float, G0: float, draw: E0Draw, gap_params: GapParams,
                           horizon: int, rng: np.random.Generator, A1: float = 4.4,
                           A2: float = 0.5, omega: OmegaConfig = OmegaConfig(),
                           noise: bool = True):
    """Joint female/male e0 path over ``horizon`` periods.

    Each period draws the female error and then the gap error. Female e0 is
    kept inside ``[15, 110]``; male e0 is female e0 minus the clamped gap.
    """
    female = np.empty(horizon)
    male = np.empty(horizon)
    l, G = float(l0_female), float(G0)
    for t in range(horizon):
        e = float(e0_error_sd(l, omega)) * rng.standard_normal() if noise else 0.0
        l_next = l + float(e0_gain(l, draw.params, A1, A2)) + e
        l_next = min(max(l_next, E0_MIN), E0_MAX)
        err = None if noise else 0.0
        G = float(project_gap(G, l, draw.l1950, gap_params, rng, err))
        l = l_next
        female[t] = l
        male[t] = l - G
    return female, male
