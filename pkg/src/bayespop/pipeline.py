"""Estimation, projection, validation and diagnosis steps behind the CLI.

Each step takes a :class:`RunConfig` and an output directory, writes its files
and returns ``(exit_code, report)`` with exit code 0 for success and 2 for
completed-with-warnings. Input and configuration problems raise.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import stats as sps

from . import __version__
from .config import CHAIN_MODELS, MODELS, ConfigError, RunConfig, config_hash, file_sha256, to_dict
from .e0 import (
    DoubleLogisticParams,
    E0Draw,
    E0Model,
    GapFit,
    GapParams,
    OmegaConfig,
    e0_error_sd,
    e0_gain,
    fit_gap_mle,
    simulate_e0_trajectory,
)
from .io import InputTables, migration_schedule, parse_inputs
from .mcmc import ChainStore, diagnostics, load_chains, posterior_predictive_draws, run_chains
from .synthetic import Phase3Generator, hier_phase3_panel
from .tfr import (
    ErrorSdConfig,
    Phase2Model,
    Phase3HierModel,
    PhaseIIIParams,
    PhaseIIParams,
    TfrDraw,
    classify_phases,
    phase3_mle,
    simulate_phase3_batch,
    simulate_tfr_trajectory,
    un_deterministic_tfr,
)
from .trajectory import (
    DEFAULT_INDICATORS,
    TrajectorySet,
    quantile_summary,
    run_probabilistic_projection,
    write_quantiles,
    write_trajectories,
)

log = logging.getLogger(__name__)

EXIT_OK, EXIT_ERROR, EXIT_WARN = 0, 1, 2


class ChainMismatchError(ValueError):
    """Stored chains were produced by a different model configuration or data."""


# --------------------------------------------------------------------------
# helpers

def _json_dump(obj, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n",
                    encoding="utf-8")
    return path


def _jsonable(o):
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serialisable: {type(o)}")


def model_seed(seed: int, model: str) -> int:
    """Per-model seed so each model's chains do not depend on which others are run."""
    return int(np.random.SeedSequence([seed, MODELS.index(model)]).generate_state(1)[0])


def error_cfg(cfg: RunConfig) -> ErrorSdConfig:
    t = cfg.tfr
    return ErrorSdConfig(t.error_sigma_max, t.error_f_peak, t.error_floor, t.error_f_low,
                         t.error_f_high, t.early_factor, t.early_cutoff_year)


def omega_cfg(cfg: RunConfig) -> OmegaConfig:
    e = cfg.e0
    return OmegaConfig(e.omega_hi, e.omega_lo, e.omega_center, e.omega_scale)


def _data_key(model: str) -> str:
    return "tfr" if model.startswith("tfr") else "e0"


def model_fingerprint(cfg: RunConfig, model: str) -> str:
    """Hash of everything a model's estimates depend on: its constants and its data file."""
    section = "tfr" if model.startswith("tfr") else ("gap" if model == "gap" else "e0")
    data_path = getattr(cfg.paths, _data_key(model))
    blob = {"model": model, "constants": to_dict(getattr(cfg, section)),
            "data": file_sha256(data_path) if data_path else None}
    return hashlib.sha256(json.dumps(blob, sort_keys=True).encode()).hexdigest()


def load_inputs(cfg: RunConfig, needed=()) -> InputTables:
    for key in needed:
        if not getattr(cfg.paths, key):
            raise ConfigError(f"paths.{key}: required for this command")
    for key, p in cfg.paths.inputs().items():
        if not Path(p).is_file():
            raise ConfigError(f"paths.{key}: file not found: {p}")
    return parse_inputs(cfg.paths.inputs())


def classified_tfr(cfg: RunConfig, tables: InputTables) -> list:
    return [classify_phases(s, cfg.tfr.decline_threshold, cfg.tfr.phase3_threshold)
            for _, s in sorted(tables.tfr.items())]


def build_model(cfg: RunConfig, tables: InputTables, name: str):
    if name == "tfr-phase2":
        t = cfg.tfr
        return Phase2Model(classified_tfr(cfg, tables), error_cfg(cfg), t.convention,
                           t.phase2_spread_max, t.sigma_max_bounds)
    if name == "tfr-phase3-hier":
        return Phase3HierModel(classified_tfr(cfg, tables))
    if name == "e0":
        e = cfg.e0
        return E0Model([s for _, s in sorted(tables.e0.items())], e.A1, e.A2, omega_cfg(cfg),
                       e.spread_max)
    raise ValueError(f"{name} is not sampled by MCMC")


# --------------------------------------------------------------------------
# estimate

def estimate(cfg: RunConfig, out_dir) -> tuple:
    out_dir = Path(out_dir)
    needed = sorted({_data_key(m) for m in cfg.models})
    tables = load_inputs(cfg, needed)
    report, code = {"config_hash": config_hash(cfg), "models": {}}, EXIT_OK
    for name in cfg.models:
        d = out_dir / name
        d.mkdir(parents=True, exist_ok=True)
        fp = model_fingerprint(cfg, name)
        if name in CHAIN_MODELS:
            model = build_model(cfg, tables, name)
            for old in list(d.glob("chain_*.csv")) + list(d.glob("chain_*.json")):
                old.unlink()
            mc = cfg.mcmc
            log.info("%s: %d chains x %d iterations over %d countries", name, mc.n_chains,
                     mc.n_iter, len(model.country_ids))
            stores = run_chains(model, mc.n_chains, mc.n_iter, mc.burn_in, mc.thin,
                                seed=model_seed(cfg.seed, name), out_dir=d,
                                metadata={"fingerprint": fp, "config_hash": config_hash(cfg)},
                                adapt_rate=mc.adapt_rate, target_accept=mc.target_accept,
                                check_every=mc.check_every)
            diag = diagnostics(stores)
            summary = diag.to_dict()
            _json_dump(summary, d / "diagnostics.json")
            if not diag.converged:
                code = EXIT_WARN
                log.warning("%s: convergence flagged for %s", name, ", ".join(diag.flagged[:10]))
            report["models"][name] = {"countries": list(model.country_ids),
                                      "converged": diag.converged,
                                      "flagged": diag.flagged}
        elif name == "tfr-phase3-fixed":
            fit = phase3_mle(classified_tfr(cfg, tables), cfg.tfr.replacement)
            res = dict(fit.to_dict(), fingerprint=fp,
                       interval_rho=list(fit.interval("rho")),
                       interval_sigma=list(fit.interval("sigma")))
            _json_dump(res, d / "mle.json")
            if fit.rho_at_boundary or fit.sigma_at_boundary:
                code = EXIT_WARN
                log.warning("%s: estimate on the parameter boundary", name)
            report["models"][name] = res
        elif name == "gap":
            g = cfg.gap
            fit = fit_gap_mle([s for _, s in sorted(tables.e0.items())], g.sigma2, g.nu, g.M,
                              g.cap, g.gamma1_default, g.tol)
            res = dict(fit.to_dict(), fingerprint=fp)
            _json_dump(res, d / "mle.json")
            if not fit.converged:
                code = EXIT_WARN
            report["models"][name] = res
    _json_dump(report, out_dir / "estimate_report.json")
    return code, report


# --------------------------------------------------------------------------
# diagnose

def diagnose(cfg: RunConfig, out_dir, chains_dir=None) -> tuple:
    """Convergence diagnostics for every model directory holding chains."""
    root = Path(chains_dir or cfg.paths.chains or out_dir)
    dirs = [root] if list(root.glob("chain_*.csv")) else sorted(
        p for p in root.iterdir() if p.is_dir() and list(p.glob("chain_*.csv"))) if root.is_dir() else []
    if not dirs:
        raise ConfigError(f"no chain files found under {root}")
    report, code = {}, EXIT_OK
    for d in dirs:
        stores = load_chains(d)
        partial = [s.metadata.get("chain_id") for s in stores if s.metadata.get("status") != "complete"]
        diag = diagnostics(stores)
        entry = diag.to_dict()
        entry["partial_chains"] = partial
        report[d.name] = entry
        if not diag.converged or partial:
            code = EXIT_WARN
    Path(out_dir).mkdir(parents=True, exist_ok=True)
    _json_dump(report, Path(out_dir) / "diagnostics_report.json")
    return code, report


# --------------------------------------------------------------------------
# project

def _load_checked(cfg: RunConfig, root: Path, name: str) -> list:
    d = root / name
    stores = load_chains(d)
    expected = model_fingerprint(cfg, name)
    for s in stores:
        if s.metadata.get("fingerprint") != expected:
            raise ChainMismatchError(f"{d}: chains were estimated with a different model "
                                     "configuration or data (fingerprint mismatch)")
    return stores


def _load_mle(cfg: RunConfig, root: Path, name: str) -> dict:
    path = root / name / "mle.json"
    if not path.is_file():
        raise ConfigError(f"{path}: missing; run estimate with model {name} first")
    res = json.loads(path.read_text(encoding="utf-8"))
    if res.get("fingerprint") != model_fingerprint(cfg, name):
        raise ChainMismatchError(f"{path}: estimated with a different model configuration or data")
    return res


def _tn_draw(rng, mean, sd, lower, upper):
    a, b = (lower - mean) / sd, (upper - mean) / sd
    return float(sps.truncnorm.rvs(a, b, loc=mean, scale=sd, random_state=rng))


def _median_sample(stores):
    pool = np.concatenate([s.draws for s in stores])
    return np.median(pool, axis=0)


class _Sample:
    """Name lookup over one posterior draw (or the posterior median)."""

    def __init__(self, names, values, draw_id):
        self.names, self.values, self.draw_id = tuple(names), np.asarray(values), draw_id
        self._idx = {n: i for i, n in enumerate(self.names)}

    def get(self, name):
        i = self._idx.get(name)
        return None if i is None else float(self.values[i])


def _samples(stores, n, rng, median: bool):
    if median:
        return [_Sample(stores[0].names, _median_sample(stores), "median")]
    return [_Sample(s.names, s.values, s.draw_id) for s in posterior_predictive_draws(stores, n, rng)]


def _phase2_params(s: _Sample, country, rng, median):
    names = ("D1", "D2", "D3", "D4", "d")
    vals = [s.get(f"{p}[{country}]") for p in names]
    if vals[0] is None:
        from .tfr import PHASE2_LOWER, PHASE2_UPPER
        means = [s.get(f"mean_{p}") for p in names]
        sds = [s.get(f"sd_{p}") for p in names]
        vals = means if median else [_tn_draw(rng, m, sd, lo, hi) for m, sd, lo, hi in
                                     zip(means, sds, PHASE2_LOWER, PHASE2_UPPER)]
    return PhaseIIParams(tuple(vals[:4]), vals[4])


def _phase3_params(s: _Sample, country, rng, median):
    mu, rho = s.get(f"mu[{country}]"), s.get(f"rho[{country}]")
    if mu is None:
        if median:
            mu, rho = s.get("mu_bar"), s.get("rho_bar")
        else:
            mu = _tn_draw(rng, s.get("mu_bar"), s.get("sigma_mu"), 0.0, np.inf)
            rho = _tn_draw(rng, s.get("rho_bar"), s.get("sigma_rho"), 0.0, 1.0)
    return PhaseIIIParams(mu, rho, s.get("sigma_eps"))


def _e0_params(s: _Sample, country, rng, median):
    from .e0 import E0_LOWER, E0_PARAMS, E0_UPPER
    vals = [s.get(f"{p}[{country}]") for p in E0_PARAMS]
    if vals[0] is None:
        means = [s.get(f"mean_{p}") for p in E0_PARAMS]
        sds = [s.get(f"sd_{p}") for p in E0_PARAMS]
        vals = means if median else [_tn_draw(rng, m, sd, lo, hi) for m, sd, lo, hi in
                                     zip(means, sds, E0_LOWER, E0_UPPER)]
    return DoubleLogisticParams(tuple(vals[:4]), vals[4], vals[5])


def _pick_country(cfg: RunConfig, tables: InputTables) -> str:
    c = cfg.projection.country_id
    if c:
        for name, tab in (("tfr", tables.tfr), ("e0", tables.e0), ("population", tables.population),
                          ("fertility_pattern", tables.patterns)):
            if c not in tab:
                raise ConfigError(f"projection.country_id: {c!r} missing from the {name} table")
        return c
    common = set(tables.tfr) & set(tables.e0) & set(tables.population) & set(tables.patterns)
    if len(common) != 1:
        raise ConfigError("projection.country_id: must be set when the inputs hold "
                          f"{len(common)} projectable countries")
    return common.pop()


@dataclass
class ProjectionInputs:
    tfr: TrajectorySet
    e0_female: TrajectorySet
    e0_male: TrajectorySet
    provenance: list
    chain_files: dict


def simulate_country(cfg: RunConfig, tables: InputTables, country: str, root: Path,
                     rng) -> ProjectionInputs:
    """Joint TFR and e0 trajectories for ``country`` from the stored posteriors."""
    median = cfg.simulation.mode == "median"
    n = 1 if median else cfg.simulation.n_trajectories
    H = cfg.simulation.horizon
    base_year = int(tables.population[country].base_period_label)
    tser = classify_phases(tables.tfr[country], cfg.tfr.decline_threshold, cfg.tfr.phase3_threshold)
    eser = tables.e0[country]
    for label, years in (("tfr", tser.period_start_years), ("e0", eser.period_start_years)):
        if years[-1] + 5 != base_year:
            raise ConfigError(f"{label} series for {country} ends in {years[-1]}; the base "
                              f"population is for {base_year}, so it must end in {base_year - 5}")
    phase = tser.last_phase
    chain_files = {}
    need_p2 = phase in ("I", "II")
    p2_stores = _load_checked(cfg, root, "tfr-phase2") if need_p2 else None
    p3_dir = root / "tfr-phase3-hier"
    if list(p3_dir.glob("chain_*.csv")):
        p3_stores, p3_fixed = _load_checked(cfg, root, "tfr-phase3-hier"), None
    else:
        p3_stores, p3_fixed = None, _load_mle(cfg, root, "tfr-phase3-fixed")
    e0_stores = _load_checked(cfg, root, "e0")
    gap = _load_mle(cfg, root, "gap")
    gap_params = GapParams(tuple(gap["beta"]), gap["gamma1"], gap["sigma2"], gap["nu"],
                           gap["M"], gap["cap"])
    for name, stores in (("tfr-phase2", p2_stores), ("tfr-phase3-hier", p3_stores),
                         ("e0", e0_stores)):
        if stores:
            chain_files[name] = {f"chain_{s.metadata.get('chain_id')}.csv":
                                 file_sha256(root / name / f"chain_{s.metadata.get('chain_id')}.csv")
                                 for s in stores}
    if p3_fixed:
        chain_files["tfr-phase3-fixed"] = {"mle.json": file_sha256(root / "tfr-phase3-fixed" / "mle.json")}
    chain_files["gap"] = {"mle.json": file_sha256(root / "gap" / "mle.json")}

    s2 = _samples(p2_stores, n, rng, median) if need_p2 else [None] * n
    s3 = _samples(p3_stores, n, rng, median) if p3_stores else [None] * n
    se = _samples(e0_stores, n, rng, median)
    ecfg, om = error_cfg(cfg), omega_cfg(cfg)
    sim_phase = "II" if phase == "I" else phase
    history = tuple(tser.values[-3:-1])
    tfr_rows, ef_rows, em_rows, prov = [], [], [], []
    for i in range(n):
        if p3_stores:
            p3 = _phase3_params(s3[i], country, rng, median)
        else:
            p3 = PhaseIIIParams(p3_fixed["mu"], p3_fixed["rho"], p3_fixed["sigma"])
        p2 = _phase2_params(s2[i], country, rng, median) if need_p2 else None
        smax = s2[i].get("sigma_max") if need_p2 else None
        draw = TfrDraw(p3, p2, smax)
        tfr_rows.append(simulate_tfr_trajectory(
            float(tser.values[-1]), sim_phase, draw, H, rng, history, base_year, cfg.tfr.floor,
            ecfg, cfg.tfr.convention, noise=not median))
        ep = _e0_params(se[i], country, rng, median)
        f, m = simulate_e0_trajectory(float(eser.female_e0[-1]), float(eser.gap[-1]),
                                      E0Draw(ep, eser.l1950), gap_params, H, rng,
                                      cfg.e0.A1, cfg.e0.A2, om, noise=not median)
        ef_rows.append(f)
        em_rows.append(m)
        prov.append({"trajectory_id": i,
                     "tfr_phase2_draw": s2[i].draw_id if need_p2 else "",
                     "tfr_phase3_draw": s3[i].draw_id if p3_stores else "mle",
                     "e0_draw": se[i].draw_id})
    labels = [str(base_year + 5 * t) for t in range(H)]
    ids = tuple(range(n))
    return ProjectionInputs(TrajectorySet("tfr", tfr_rows, labels, ids),
                            TrajectorySet("e0_female", ef_rows, labels, ids),
                            TrajectorySet("e0_male", em_rows, labels, ids), prov, chain_files)


def project(cfg: RunConfig, out_dir) -> tuple:
    out_dir = Path(out_dir)
    root = Path(cfg.paths.chains or out_dir)
    tables = load_inputs(cfg, ("tfr", "e0", "population", "fertility_pattern"))
    country = _pick_country(cfg, tables)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 7919]))
    sim = simulate_country(cfg, tables, country, root, rng)
    base = tables.population[country]
    H = cfg.simulation.horizon
    base_year = int(base.base_period_label)
    periods = [base_year + 5 * t for t in range(H)]
    mig = migration_schedule(tables, country, periods, base.n_groups) if tables.migration else None
    indicators = {k: DEFAULT_INDICATORS[k] for k in cfg.projection.indicators}
    sets = run_probabilistic_projection(base, sim.tfr, sim.e0_female, sim.e0_male,
                                        tables.patterns[country], tables.standard, mig,
                                        cfg.projection.sex_ratio_at_birth, indicators, base_year)
    d = out_dir / "projection"
    d.mkdir(parents=True, exist_ok=True)
    order = ["tfr", "e0_female", "e0_male"] + list(indicators)
    tsets = [sets[k] for k in order]
    outputs = {
        "trajectories.csv": write_trajectories(tsets, d / "trajectories.csv"),
        "quantiles.csv": write_quantiles([quantile_summary(ts, cfg.simulation.probs) for ts in tsets],
                                         d / "quantiles.csv"),
    }
    with (d / "provenance.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, ["trajectory_id", "tfr_phase2_draw", "tfr_phase3_draw", "e0_draw"])
        w.writeheader()
        w.writerows(sim.provenance)
    outputs["provenance.csv"] = d / "provenance.csv"
    if cfg.projection.un_baseline:
        t = cfg.tfr
        un = un_deterministic_tfr(float(tables.tfr[country].values[-1]), t.un_pattern, H,
                                  t.un_ultimate, t.un_step, t.un_variant_offset)
        with (d / "un_baseline.csv").open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["variant", "period", "tfr"])
            for variant in ("low", "medium", "high"):
                for p, v in zip(sim.tfr.period_labels, un[variant]):
                    w.writerow([variant, p, repr(float(v))])
        outputs["un_baseline.csv"] = d / "un_baseline.csv"
    manifest = {
        "package_version": __version__,
        "config_hash": config_hash(cfg),
        "seed": cfg.seed,
        "country_id": country,
        "base_year": base_year,
        "mode": cfg.simulation.mode,
        "n_trajectories": sim.tfr.n_trajectories,
        "horizon": H,
        "chains": sim.chain_files,
        "outputs": {k: file_sha256(v) for k, v in sorted(outputs.items())},
    }
    _json_dump(manifest, d / "manifest.json")
    return EXIT_OK, manifest


# --------------------------------------------------------------------------
# validate

def _interval_hits(pred: np.ndarray, obs: np.ndarray) -> dict:
    """pred: [n_draws x H]; obs: [H]. Returns hit indicators per nominal level."""
    q = np.quantile(pred, [0.025, 0.1, 0.9, 0.975], axis=0)
    return {"80": (obs >= q[1]) & (obs <= q[2]), "95": (obs >= q[0]) & (obs <= q[3])}


def _predict_phase3(stores, model, country_idx, last, H, n, rng):
    samples = posterior_predictive_draws(stores, n, rng)
    names = samples[0].names
    c = model.country_ids[country_idx]
    i_mu, i_rho, i_s = names.index(f"mu[{c}]"), names.index(f"rho[{c}]"), names.index("sigma_eps")
    vals = np.array([s.values for s in samples])
    return simulate_phase3_batch(last, vals[:, i_mu], vals[:, i_rho], vals[:, i_s], H, rng, n)


def _predict_e0(stores, model, country_idx, last, H, n, rng, A1, A2, omega):
    from .e0 import E0_PARAMS
    samples = posterior_predictive_draws(stores, n, rng)
    names = samples[0].names
    c = model.country_ids[country_idx]
    cols = [names.index(f"{p}[{c}]") for p in E0_PARAMS]
    vals = np.array([s.values for s in samples])[:, cols]
    out = np.empty((n, H))
    l = np.full(n, last)
    from .e0 import double_logistic_gain
    for h in range(H):
        g = double_logistic_gain(l, *(vals[:, j] for j in range(6)), A1=A1, A2=A2)
        l = l + g + e0_error_sd(l, omega) * rng.standard_normal(n)
        out[:, h] = l
    return out


def _fit_and_score(cfg: RunConfig, name: str, train: list, held: dict, seed, rng) -> dict:
    """Fit ``name`` on ``train`` and score held-out values ``held[country] -> (years, obs)``."""
    mc = cfg.mcmc
    if name == "tfr-phase3-hier":
        model = Phase3HierModel(train)
        last = {s.country_id: float(s.values[-1]) for s in train}
    else:
        e = cfg.e0
        model = E0Model(train, e.A1, e.A2, omega_cfg(cfg), e.spread_max)
        last = {s.country_id: float(s.female_e0[-1]) for s in train}
    stores = run_chains(model, mc.n_chains, mc.n_iter, mc.burn_in, mc.thin, seed=seed,
                        adapt_rate=mc.adapt_rate, target_accept=mc.target_accept,
                        check_every=mc.check_every)
    per_country = {}
    for ci, c in enumerate(model.country_ids):
        if c not in held:
            continue
        years, obs = held[c]
        if name == "tfr-phase3-hier":
            pred = _predict_phase3(stores, model, ci, last[c], len(obs), cfg.validate.n_draws, rng)
        else:
            pred = _predict_e0(stores, model, ci, last[c], len(obs), cfg.validate.n_draws, rng,
                               cfg.e0.A1, cfg.e0.A2, omega_cfg(cfg))
        hits = _interval_hits(pred, np.asarray(obs))
        per_country[c] = {"n": len(obs), "hits80": int(hits["80"].sum()),
                          "hits95": int(hits["95"].sum())}
    return {"per_country": per_country, "converged": diagnostics(stores).converged}


def _coverage(per_country: dict) -> tuple:
    n = sum(v["n"] for v in per_country.values())
    if n == 0:
        return float("nan"), float("nan"), 0
    return (sum(v["hits80"] for v in per_country.values()) / n,
            sum(v["hits95"] for v in per_country.values()) / n, n)


COVERAGE_TARGETS = {"80": (0.70, 0.90), "95": (0.88, 0.99)}


def validate(cfg: RunConfig, out_dir) -> tuple:
    """Holdout calibration: refit on data before the holdout, score projections after it.

    With ``validate.replications > 0`` the data are simulated from the
    hierarchical Phase III model (generator hyperparameters from the config
    or, when TFR data are given, the posterior mean of a fit to them) and the
    exercise is repeated on fresh panels.
    """
    v = cfg.validate
    out = Path(out_dir) / "validate"
    out.mkdir(parents=True, exist_ok=True)
    root = np.random.SeedSequence([cfg.seed, 104729])
    if v.replications > 0:
        report = _self_consistency(cfg, root)
    else:
        report = _holdout(cfg, root)
    c80, c95 = report["coverage80"], report["coverage95"]
    report["within_target"] = bool(COVERAGE_TARGETS["80"][0] <= c80 <= COVERAGE_TARGETS["80"][1]
                                   and COVERAGE_TARGETS["95"][0] <= c95 <= COVERAGE_TARGETS["95"][1])
    report["targets"] = {k: list(b) for k, b in COVERAGE_TARGETS.items()}
    report["config_hash"] = config_hash(cfg)
    _json_dump(report, out / "calibration_report.json")
    return (EXIT_OK if report["within_target"] else EXIT_WARN), report


def _self_consistency(cfg: RunConfig, root) -> dict:
    v = cfg.validate
    if v.model != "tfr-phase3-hier":
        raise ConfigError("validate.replications: self-consistency runs use tfr-phase3-hier")
    gen = Phase3Generator.from_array(v.generator)
    source = "config"
    if cfg.paths.tfr:
        tables = load_inputs(cfg, ("tfr",))
        mc = cfg.mcmc
        stores = run_chains(Phase3HierModel(classified_tfr(cfg, tables)), mc.n_chains, mc.n_iter,
                            mc.burn_in, mc.thin, seed=int(root.generate_state(1)[0]))
        names = stores[0].names
        pool = np.concatenate([s.draws for s in stores])
        gen = Phase3Generator.from_array([pool[:, names.index(n)].mean() for n in
                                          ("mu_bar", "sigma_mu", "rho_bar", "sigma_rho", "sigma_eps")])
        source = "posterior mean of fit to input data"
    reps = []
    children = root.spawn(v.replications)
    n_train = v.n_periods - v.holdout_periods
    for r, child in enumerate(children):
        data_ss, fit_ss, pred_ss = child.spawn(3)
        panel, _, _ = hier_phase3_panel(np.random.default_rng(data_ss), gen, v.n_countries,
                                        v.n_periods)
        train = [type(s)(s.country_id, s.values[:n_train], s.period_start_years[:n_train],
                         s.phase_at[:n_train]) for s in panel]
        held = {s.country_id: (s.period_start_years[n_train:], s.values[n_train:]) for s in panel}
        res = _fit_and_score(cfg, "tfr-phase3-hier", train, held,
                             int(fit_ss.generate_state(1)[0]), np.random.default_rng(pred_ss))
        c80, c95, n = _coverage(res["per_country"])
        reps.append({"replication": r, "coverage80": c80, "coverage95": c95, "n": n,
                     "converged": res["converged"]})
        log.info("replication %d: coverage80 %.3f coverage95 %.3f", r, c80, c95)
    n_tot = sum(x["n"] for x in reps)
    return {
        "mode": "self-consistency",
        "generator": dict(zip(("mu_bar", "sigma_mu", "rho_bar", "sigma_rho", "sigma_eps"),
                              gen.as_array().tolist())),
        "generator_source": source,
        "replications": reps,
        "coverage80": sum(x["coverage80"] * x["n"] for x in reps) / n_tot,
        "coverage95": sum(x["coverage95"] * x["n"] for x in reps) / n_tot,
        "n_scored": n_tot,
    }


def _holdout(cfg: RunConfig, root) -> dict:
    v = cfg.validate
    if v.holdout_year is None:
        raise ConfigError("validate.holdout_year: required unless validate.replications > 0")
    key = "tfr" if v.model == "tfr-phase3-hier" else "e0"
    tables = load_inputs(cfg, (key,))
    series = classified_tfr(cfg, tables) if key == "tfr" else [s for _, s in sorted(tables.e0.items())]
    last_obs = max(int(s.period_start_years[-1]) for s in series)
    if v.holdout_year > last_obs:
        raise ConfigError(f"validate.holdout_year: {v.holdout_year} is after the last "
                          f"observation ({last_obs}); nothing to hold out")
    train, held, skipped = [], {}, []
    for s in series:
        keep = s.period_start_years < v.holdout_year
        if keep.sum() < v.min_train_periods:
            skipped.append(s.country_id)
            continue
        if key == "tfr":
            t = type(s)(s.country_id, s.values[keep], s.period_start_years[keep], s.phase_at[:keep.sum()])
            if t.last_phase != "III":
                skipped.append(s.country_id)
                continue
            obs = s.values[~keep]
        else:
            t = s.truncated(v.holdout_year)
            obs = s.female_e0[~keep]
        train.append(t)
        if obs.size:
            held[s.country_id] = (s.period_start_years[~keep], obs)
    if not train or not held:
        raise ConfigError("validate.holdout_year: no country has enough pre-holdout data "
                          f"(at least {v.min_train_periods} periods) and held-out observations")
    fit_ss, pred_ss = root.spawn(2)
    res = _fit_and_score(cfg, v.model, train, held, int(fit_ss.generate_state(1)[0]),
                         np.random.default_rng(pred_ss))
    c80, c95, n = _coverage(res["per_country"])
    per = {c: dict(d, coverage80=d["hits80"] / d["n"], coverage95=d["hits95"] / d["n"])
           for c, d in res["per_country"].items()}
    return {"mode": "holdout", "model": v.model, "holdout_year": v.holdout_year,
            "coverage80": c80, "coverage95": c95, "n_scored": n, "per_country": per,
            "skipped": skipped, "converged": res["converged"]}
