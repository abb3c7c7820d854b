"""Vectorised densities used by the likelihoods.

scipy.stats frozen distributions carry ~100us of overhead per call, which
dominates an MCMC sweep, so the few densities we need are written against
scipy.special directly.
"""

import numpy as np
from scipy.special import gammaln, log_ndtr

LOG_SQRT_2PI = 0.5 * np.log(2 * np.pi)


def norm_logpdf(x, mean, sd):
    z = (np.asarray(x) - mean) / sd
    return -0.5 * z * z - np.log(sd) - LOG_SQRT_2PI


def _log_diff_ndtr(a, b):
    """log(Phi(b) - Phi(a)) for a < b, accurate in both tails."""
    a, b = np.broadcast_arrays(np.asarray(a, float), np.asarray(b, float))
    # work in the lower tail: Phi(b) - Phi(a) == Phi(-a) - Phi(-b)
    flip = a > 0
    lo = np.where(flip, -b, a)
    hi = np.where(flip, -a, b)
    lhi = log_ndtr(hi)
    llo = log_ndtr(lo)
    with np.errstate(divide="ignore"):
        return lhi + np.log1p(-np.exp(llo - lhi))


def truncnorm_logpdf(x, mean, sd, lower, upper):
    """Log density of N(mean, sd^2) truncated to [lower, upper].

    Returns -inf outside the support or for non-positive ``sd``.
    """
    x = np.asarray(x, float)
    mean = np.asarray(mean, float)
    sd = np.asarray(sd, float)
    with np.errstate(divide="ignore", invalid="ignore"):
        a = (lower - mean) / sd
        b = (upper - mean) / sd
        out = norm_logpdf(x, mean, sd) - _log_diff_ndtr(a, b)
    bad = (x < lower) | (x > upper) | ~(sd > 0)
    return np.where(bad, -np.inf, out)


def student_t_logpdf(x, scale, df):
    """Location-zero Student t with the given scale (not variance)."""
    z = np.asarray(x) / scale
    return (gammaln((df + 1) / 2) - gammaln(df / 2) - 0.5 * np.log(df * np.pi)
            - np.log(scale) - (df + 1) / 2 * np.log1p(z * z / df))


def reflect(x, lower, upper):
    """Fold ``x`` back into ``[lower, upper]`` by mirror reflection at the bounds.

    Reflection maps a symmetric random-walk proposal to a symmetric one on
    the bounded box. Infinite bounds are allowed.
    """
    x = np.asarray(x, float)
    lower = np.broadcast_to(np.asarray(lower, float), x.shape)
    upper = np.broadcast_to(np.asarray(upper, float), x.shape)
    out = x.copy()
    both = np.isfinite(lower) & np.isfinite(upper)
    if np.any(both):
        width = (upper - lower)[both]
        y = np.mod(x[both] - lower[both], 2 * width)
        out[both] = lower[both] + np.where(y > width, 2 * width - y, y)
    lo_only = np.isfinite(lower) & ~np.isfinite(upper)
    out[lo_only] = np.where(x[lo_only] < lower[lo_only],
                            2 * lower[lo_only] - x[lo_only], x[lo_only])
    hi_only = ~np.isfinite(lower) & np.isfinite(upper)
    out[hi_only] = np.where(x[hi_only] > upper[hi_only],
                            2 * upper[hi_only] - x[hi_only], x[hi_only])
    return out
