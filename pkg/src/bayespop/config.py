"""Run configuration: nested dataclasses read from and written to JSON.

Every model constant used by the pipeline has a field here with its default.
Unknown keys and wrongly typed values are rejected with the dotted path of
the offending field.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import typing
from dataclasses import dataclass, field
from pathlib import Path

MODELS = ("tfr-phase2", "tfr-phase3-fixed", "tfr-phase3-hier", "e0", "gap")
CHAIN_MODELS = ("tfr-phase2", "tfr-phase3-hier", "e0")


class ConfigError(ValueError):
    pass


@dataclass
class McmcConfig:
    n_chains: int = 3
    n_iter: int = 60_000
    burn_in: int = 10_000
    thin: int = 10
    adapt_rate: float = 0.01
    target_accept: float = 0.3
    check_every: int = 1000


@dataclass
class SimulationConfig:
    n_trajectories: int = 2000
    horizon: int = 18
    mode: str = "sample"          # "sample" or "median"
    probs: tuple = (0.025, 0.1, 0.5, 0.9, 0.975)


@dataclass
class PathsConfig:
    tfr: typing.Optional[str] = None
    e0: typing.Optional[str] = None
    population: typing.Optional[str] = None
    migration: typing.Optional[str] = None
    fertility_pattern: typing.Optional[str] = None
    standard_life_table: typing.Optional[str] = None
    chains: typing.Optional[str] = None     # estimate output used by project/diagnose

    def inputs(self) -> dict:
        keys = ("tfr", "e0", "population", "migration", "fertility_pattern", "standard_life_table")
        return {k: getattr(self, k) for k in keys if getattr(self, k)}


@dataclass
class TfrConfig:
    convention: str = "printed"       # first-midpoint convention, "printed" or "upper"
    decline_threshold: float = 0.5
    phase3_threshold: float = 2.0
    replacement: float = 2.1          # fixed mean of the Phase III MLE model
    floor: float = 0.5                # lower bound on simulated TFR
    error_sigma_max: float = 0.3      # starting value; sampled in Phase II
    error_f_peak: float = 4.0
    error_floor: float = 0.05
    error_f_low: float = 1.0
    error_f_high: float = 8.5
    early_factor: float = 1.5
    early_cutoff_year: int = 1975
    phase2_spread_max: tuple = (5.0, 5.0, 5.0, 5.0, 2.5)
    sigma_max_bounds: tuple = (0.06, 1.5)
    un_pattern: str = "medium"
    un_ultimate: float = 1.85
    un_step: float = 0.05
    un_variant_offset: float = 0.5


@dataclass
class E0Config:
    A1: float = 4.4
    A2: float = 0.5
    omega_hi: float = 1.0
    omega_lo: float = 0.2
    omega_center: float = 65.0
    omega_scale: float = 5.0
    spread_max: tuple = (50.0, 50.0, 50.0, 50.0, 5.0, 1.0)


@dataclass
class GapConfig:
    sigma2: float = 0.0665
    nu: float = 2.0
    M: float = 86.2
    cap: float = 18.0
    gamma1_default: float = 1.0
    tol: float = 1e-8


@dataclass
class ProjectionConfig:
    country_id: str = ""
    sex_ratio_at_birth: float = 1.05
    indicators: tuple = ("total_population", "psr", "median_age")
    un_baseline: bool = True


@dataclass
class ValidateConfig:
    model: str = "tfr-phase3-hier"
    holdout_year: typing.Optional[int] = None
    replications: int = 0            # > 0 switches to self-consistency calibration
    n_countries: int = 15
    n_periods: int = 10
    holdout_periods: int = 3
    n_draws: int = 1000
    min_train_periods: int = 4
    generator: tuple = (1.9, 0.15, 0.8, 0.1, 0.1)   # mu_bar, sigma_mu, rho_bar, sigma_rho, sigma_eps


@dataclass
class RunConfig:
    models: tuple = ("tfr-phase2", "tfr-phase3-hier", "e0", "gap")
    seed: int = 0
    mcmc: McmcConfig = field(default_factory=McmcConfig)
    simulation: SimulationConfig = field(default_factory=SimulationConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)
    tfr: TfrConfig = field(default_factory=TfrConfig)
    e0: E0Config = field(default_factory=E0Config)
    gap: GapConfig = field(default_factory=GapConfig)
    projection: ProjectionConfig = field(default_factory=ProjectionConfig)
    validate: ValidateConfig = field(default_factory=ValidateConfig)


# --------------------------------------------------------------------------
# (de)serialisation

def _coerce(value, tp, where: str):
    origin = typing.get_origin(tp)
    if origin is typing.Union:
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        if value is None:
            return None
        return _coerce(value, args[0], where)
    if dataclasses.is_dataclass(tp):
        if not isinstance(value, dict):
            raise ConfigError(f"{where}: expected an object")
        return from_dict(tp, value, where)
    if tp is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{where}: expected a list")
        return tuple(value)
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true or false")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string, got {value!r}")
        return value
    return value


def from_dict(cls, data: dict, where: str = ""):
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    for key in data:
        if key not in names:
            path = f"{where}.{key}" if where else key
            raise ConfigError(f"{path}: unknown config field")
    kwargs = {}
    for name, value in data.items():
        path = f"{where}.{name}" if where else name
        kwargs[name] = _coerce(value, hints[name], path)
    return cls(**kwargs)


def to_dict(cfg) -> dict:
    def conv(v):
        if isinstance(v, tuple):
            return [conv(x) for x in v]
        return v
    return {k: (to_dict(v) if dataclasses.is_dataclass(v) else conv(v))
            for k, v in ((f.name, getattr(cfg, f.name)) for f in dataclasses.fields(cfg))}


def dumps(cfg: RunConfig) -> str:
    return json.dumps(to_dict(cfg), indent=2, sort_keys=True) + "\n"


def loads(text: str) -> RunConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    cfg = from_dict(RunConfig, data)
    validate_config(cfg)
    return cfg


def load_config(path) -> RunConfig:
    """Read a JSON config; relative input paths resolve against the config's directory."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from exc
    cfg = loads(text)
    base = path.resolve().parent
    for f in dataclasses.fields(PathsConfig):
        v = getattr(cfg.paths, f.name)
        if v and not Path(v).is_absolute():
            setattr(cfg.paths, f.name, str(base / v))
    return cfg


def config_hash(cfg: RunConfig) -> str:
    canon = json.dumps(to_dict(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _check(cond, where, msg):
    if not cond:
        raise ConfigError(f"{where}: {msg}")


def validate_config(cfg: RunConfig) -> RunConfig:
    for m in cfg.models:
        _check(m in MODELS, "models", f"unknown model {m!r}; choose from {', '.join(MODELS)}")
    mc = cfg.mcmc
    _check(mc.n_chains >= 1, "mcmc.n_chains", "must be >= 1")
    _check(mc.n_iter > mc.burn_in >= 0, "mcmc.burn_in", "need 0 <= burn_in < n_iter")
    _check(mc.thin >= 1, "mcmc.thin", "must be >= 1")
    _check(0 < mc.target_accept < 1, "mcmc.target_accept", "must lie in (0, 1)")
    _check(mc.adapt_rate >= 0, "mcmc.adapt_rate", "must be >= 0")
    _check(mc.check_every >= 0, "mcmc.check_every", "must be >= 0")
    sim = cfg.simulation
    _check(sim.n_trajectories >= 1, "simulation.n_trajectories", "must be >= 1")
    _check(sim.horizon >= 1, "simulation.horizon", "must be >= 1")
    _check(sim.mode in ("sample", "median"), "simulation.mode", "must be 'sample' or 'median'")
    _check(all(0 < p < 1 for p in sim.probs), "simulation.probs", "must lie in (0, 1)")
    _check(list(sim.probs) == sorted(sim.probs), "simulation.probs", "must be increasing")
    t = cfg.tfr
    _check(t.convention in ("printed", "upper"), "tfr.convention", "must be 'printed' or 'upper'")
    _check(t.error_f_low < t.error_f_peak < t.error_f_high, "tfr.error_f_peak",
           "need error_f_low < error_f_peak < error_f_high")
    _check(0 < t.error_floor < t.sigma_max_bounds[0], "tfr.error_floor",
           "must be positive and below the lower sigma_max bound")
    _check(len(t.phase2_spread_max) == 5, "tfr.phase2_spread_max", "need five values")
    _check(len(t.sigma_max_bounds) == 2 and t.sigma_max_bounds[0] < t.sigma_max_bounds[1],
           "tfr.sigma_max_bounds", "need [lower, upper] with lower < upper")
    _check(0 < t.replacement, "tfr.replacement", "must be positive")
    e = cfg.e0
    _check(0 < e.omega_lo <= e.omega_hi, "e0.omega_lo", "need 0 < omega_lo <= omega_hi")
    _check(e.omega_scale > 0, "e0.omega_scale", "must be positive")
    _check(len(e.spread_max) == 6, "e0.spread_max", "need six values")
    g = cfg.gap
    _check(g.sigma2 > 0 and g.nu > 0 and g.cap > 0, "gap", "sigma2, nu and cap must be positive")
    p = cfg.projection
    _check(p.sex_ratio_at_birth > 0, "projection.sex_ratio_at_birth", "must be positive")
    known = ("total_population", "psr", "median_age")
    for ind in p.indicators:
        _check(ind in known, "projection.indicators", f"unknown indicator {ind!r}")
    v = cfg.validate
    _check(v.model in ("tfr-phase3-hier", "e0"), "validate.model",
           "must be 'tfr-phase3-hier' or 'e0'")
    _check(v.replications >= 0, "validate.replications", "must be >= 0")
    _check(v.holdout_periods >= 1, "validate.holdout_periods", "must be >= 1")
    _check(v.n_periods - v.holdout_periods >= v.min_train_periods, "validate.n_periods",
           "holdout leaves fewer than min_train_periods for fitting")
    _check(v.n_draws >= 10, "validate.n_draws", "must be >= 10")
    _check(len(v.generator) == 5, "validate.generator", "need five hyperparameters")
    return cfg
