"""Bayesian probabilistic population projections.

Hierarchical models for total fertility and life expectancy, fitted by
Metropolis-within-Gibbs, drive a cohort-component projection whose
trajectories give predictive distributions for population indicators.
"""

__version__ = "0.1.0"
