"""Synthetic data generators for fixtures, calibration runs and demos.

All generators draw from the package's own models, so fitted parameters can be
checked against the values used to produce the data.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .demog import AgePyramid
from .e0 import DoubleLogisticParams, E0Draw, E0Series, GapParams, simulate_e0_trajectory
from .tfr import (
    ErrorSdConfig,
    PhaseIIIParams,
    PhaseIIParams,
    TfrDraw,
    TfrSeries,
    simulate_tfr_trajectory,
)
from .trajectory import FertilityAgePattern, StandardLifeTable, bundled_standard

DEFAULT_PATTERN = (0.05, 0.2, 0.28, 0.24, 0.15, 0.07, 0.01)


def ar1_series(rng, n_transitions: int, rho: float, sigma: float, mu: float = 2.1,
               start=(1.2, 1.9), country_id: str = "c0", start_year: int = 1990) -> TfrSeries:
    """One Phase III series annotated as Phase III throughout."""
    v = [rng.uniform(*start) if isinstance(start, tuple) else float(start)]
    for _ in range(n_transitions):
        v.append(mu + rho * (v[-1] - mu) + sigma * rng.standard_normal())
    years = start_year + 5 * np.arange(n_transitions + 1)
    return TfrSeries(country_id, v, years, ("III",) * (n_transitions + 1))


def phase3_panel(rng, transitions_per_series, rho=0.89, sigma=0.10, mu=2.1,
                 start=(1.2, 1.9)) -> list[TfrSeries]:
    return [ar1_series(rng, n, rho, sigma, mu, start, f"c{i:02d}")
            for i, n in enumerate(transitions_per_series)]


def panel_scale_counts(n_series: int = 21, n_transitions: int = 54) -> list[int]:
    """Spread ``n_transitions`` as evenly as possible over ``n_series`` series."""
    base, extra = divmod(n_transitions, n_series)
    return [base + (i < extra) for i in range(n_series)]


def _tn(rng, mean, sd, lower, upper):
    """Truncated normal draw by rejection (bounds are never far in the tails here)."""
    for _ in range(10_000):
        x = rng.normal(mean, sd)
        if lower <= x <= upper:
            return x
    return float(np.clip(mean, lower, upper))


@dataclass(frozen=True)
class Phase3Generator:
    """Hyperparameters for simulating hierarchical Phase III panels."""

    mu_bar: float = 1.9
    sigma_mu: float = 0.15
    rho_bar: float = 0.8
    sigma_rho: float = 0.1
    sigma_eps: float = 0.1

    def as_array(self) -> np.ndarray:
        return np.array([self.mu_bar, self.sigma_mu, self.rho_bar, self.sigma_rho, self.sigma_eps])

    @classmethod
    def from_array(cls, a) -> "Phase3Generator":
        return cls(*[float(x) for x in a])


def hier_phase3_panel(rng, gen: Phase3Generator, n_countries: int, n_periods: int,
                      start=(1.3, 2.0), start_year: int = 1970):
    """Panel from the hierarchical Phase III model; returns (series, mu_c, rho_c)."""
    series, mus, rhos = [], [], []
    for c in range(n_countries):
        mu = _tn(rng, gen.mu_bar, gen.sigma_mu, 0.0, np.inf)
        rho = _tn(rng, gen.rho_bar, gen.sigma_rho, 0.0, 1.0)
        series.append(ar1_series(rng, n_periods - 1, rho, gen.sigma_eps, mu, start,
                                 f"c{c:02d}", start_year))
        mus.append(mu)
        rhos.append(rho)
    return series, np.array(mus), np.array(rhos)


def outlier_fixture(rng, n_typical: int = 20, typical_mu: float = 2.0, outlier_mu: float = 1.5,
                    typical_transitions: int = 2, outlier_transitions: int = 34,
                    rho: float = 0.7, sigma: float = 0.1):
    """Short recoveries toward ``typical_mu`` plus one long series settling at ``outlier_mu``.

    The typical countries carry few transitions each, as most post-transition
    series do, so the spread of country means stays weakly identified; the
    outlier starts well below its asymptote so its mean is informed by data.
    """
    series = [ar1_series(rng, typical_transitions, rho, sigma, typical_mu, (1.4, 1.9), f"c{i:02d}",
                         2000 - 5 * typical_transitions) for i in range(n_typical)]
    series.append(ar1_series(rng, outlier_transitions, rho, sigma, outlier_mu, 1.0, "outlier",
                             2000 - 5 * outlier_transitions))
    return series


# --------------------------------------------------------------------------
# full country panels for CLI fixtures

TRUE_GAP = GapParams(beta=(-1.0, 0.02, 0.7, 0.03, -0.06), gamma1=0.95)


@dataclass
class SyntheticCountry:
    tfr: TfrSeries
    e0: E0Series
    pyramid: AgePyramid
    pattern: FertilityAgePattern


def _base_pyramid(rng, standard: StandardLifeTable, growth: float, size: float, label: str):
    ages = np.arange(standard.lx_female.size) * standard.age_width
    w = np.exp(-growth * ages)
    f = size * w * standard.lx_female * rng.uniform(0.95, 1.05, ages.size)
    m = size * 1.03 * w * standard.lx_male * rng.uniform(0.95, 1.05, ages.size)
    return AgePyramid(f, m, standard.age_width, label)


def synthetic_country(rng, country_id: str, first_year: int = 1950, n_periods: int = 13,
                      standard: StandardLifeTable | None = None) -> SyntheticCountry:
    """Fertility transition plus recovery, female/male e0, and a base pyramid.

    TFR starts high and declines along a double logistic until the
    Phase III rule fires, then recovers as an AR(1). Female e0 follows the
    gain model and the gap follows ``TRUE_GAP``. The pyramid is a stable-like
    population for the period after the last observation.
    """
    standard = standard or bundled_standard()
    years = first_year + 5 * np.arange(n_periods)
    p2 = PhaseIIParams((1.0, 3.5, 2.0, 1.6), rng.uniform(0.6, 1.0))
    p3 = PhaseIIIParams(rng.uniform(1.7, 2.0), rng.uniform(0.7, 0.9), 0.1)
    f0 = rng.uniform(5.8, 6.8)
    tfr = simulate_tfr_trajectory(f0, "II", TfrDraw(p3, p2, 0.3), n_periods - 1, rng,
                                  start_year=first_year, error_cfg=ErrorSdConfig(sigma_max=0.3))
    tfr_series = TfrSeries(country_id, np.concatenate([[f0], tfr]), years)

    gain = DoubleLogisticParams((20.0, 25.0, 15.0, 15.0), rng.uniform(3.0, 4.0),
                                rng.uniform(0.5, 0.8))
    l0 = rng.uniform(45.0, 65.0)
    g0 = rng.uniform(3.0, 6.0)
    fem, male = simulate_e0_trajectory(l0, g0, E0Draw(gain, l0), TRUE_GAP, n_periods - 1, rng)
    e0 = E0Series(country_id, np.concatenate([[l0], fem]), np.concatenate([[l0 - g0], male]), years)

    pyramid = _base_pyramid(rng, standard, rng.uniform(0.0, 0.02), rng.uniform(2e5, 2e6),
                            str(years[-1] + 5))
    props = np.array(DEFAULT_PATTERN) * rng.uniform(0.9, 1.1, len(DEFAULT_PATTERN))
    pattern = FertilityAgePattern(props / props.sum(), 3)
    return SyntheticCountry(tfr_series, e0, pyramid, pattern)


def synthetic_panel(seed: int, n_countries: int = 12, first_year: int = 1950,
                    n_periods: int = 13) -> list[SyntheticCountry]:
    rng = np.random.default_rng(seed)
    return [synthetic_country(rng, f"C{i:02d}", first_year, n_periods) for i in range(n_countries)]


def write_fixture(directory, countries, standard: StandardLifeTable | None = None,
                  migration: dict | None = None) -> dict:
    """Write the CSV inputs for ``countries``; returns the file paths by table name.

    ``migration`` maps country id to ``{period_start: (female, male)}`` net counts.
    """
    from .io import (write_e0_csv, write_migration_csv, write_pattern_csv, write_population_csv,
                     write_tfr_csv)
    from .trajectory import write_standard_life_table

    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    paths = {
        "tfr": write_tfr_csv([c.tfr for c in countries], d / "tfr.csv"),
        "e0": write_e0_csv([c.e0 for c in countries], d / "e0.csv"),
        "population": write_population_csv({c.tfr.country_id: c.pyramid for c in countries},
                                           d / "population.csv"),
        "fertility_pattern": write_pattern_csv({c.tfr.country_id: c.pattern for c in countries},
                                               d / "fertility_pattern.csv"),
        "standard_life_table": write_standard_life_table(standard or bundled_standard(),
                                                         d / "standard_life_table.csv"),
    }
    if migration is not None:
        paths["migration"] = write_migration_csv(migration, d / "migration.csv")
    return {k: str(v) for k, v in paths.items()}

