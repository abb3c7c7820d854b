"""Metropolis-Hastings within Gibbs with adaptive random-walk proposals.

Targets are :class:`HierarchicalModel` subclasses whose parameters split into
world hyperparameters (updated one coordinate at a time) and one row of
parameters per country (each row updated jointly). Country rows are
conditionally independent given the world, so a sweep proposes every row at
once and accepts or rejects each row on its own terms.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .stats import reflect

log = logging.getLogger(__name__)

DEFAULT_N_TRAJECTORIES = 2000
RHAT_THRESHOLD = 1.1


class ChainStorageError(OSError):
    """Writing a chain failed; ``partial`` holds the draws written so far."""

    def __init__(self, msg, partial=None):
        super().__init__(msg)
        self.partial = partial


class HierarchicalModel:
    """Log-density target split into world and country parameters.

    Subclasses set the name/bound attributes and implement
    :meth:`country_terms`, which returns, for each country, every term of the
    joint log density that involves that country's parameters (its
    likelihood plus its prior given the world). The joint density is
    ``hyper_log_prior(world) + country_terms(world, country).sum()``.
    """

    name = "model"
    version = "1"
    world_names: tuple = ()
    world_lower = np.zeros(0)
    world_upper = np.zeros(0)
    param_names: tuple = ()
    country_lower = np.zeros(0)
    country_upper = np.zeros(0)
    country_ids: tuple = ()

    def initial_world(self) -> np.ndarray:
        raise NotImplementedError

    def initial_country(self, world) -> np.ndarray:
        return np.zeros((len(self.country_ids), len(self.param_names)))

    def hyper_log_prior(self, world) -> float:
        """Uniform box prior on the world parameters."""
        world = np.asarray(world)
        if np.any(world < self.world_lower) or np.any(world > self.world_upper):
            return -np.inf
        width = np.asarray(self.world_upper) - np.asarray(self.world_lower)
        return -float(np.sum(np.log(width[np.isfinite(width)])))

    def country_terms(self, world, country) -> np.ndarray:
        return np.zeros(len(self.country_ids))

    def log_density(self, world, country) -> float:
        hyper = self.hyper_log_prior(world)
        if not np.isfinite(hyper):
            return -np.inf
        total = hyper + float(np.sum(self.country_terms(world, country)))
        return total if not np.isnan(total) else -np.inf

    def world_proposal_scales(self) -> np.ndarray:
        return _default_scales(self.world_lower, self.world_upper)

    def country_proposal_scales(self) -> np.ndarray:
        return _default_scales(self.country_lower, self.country_upper)

    def column_names(self) -> list[str]:
        cols = list(self.world_names)
        for c in self.country_ids:
            cols.extend(f"{p}[{c}]" for p in self.param_names)
        return cols

    def pack(self, world, country) -> np.ndarray:
        return np.concatenate([np.asarray(world, float), np.asarray(country, float).ravel()])

    def unpack(self, flat) -> tuple[np.ndarray, np.ndarray]:
        flat = np.asarray(flat, float)
        p = len(self.world_names)
        return flat[:p], flat[p:].reshape(len(self.country_ids), len(self.param_names))


def _default_scales(lower, upper):
    width = np.asarray(upper, float) - np.asarray(lower, float)
    return np.where(np.isfinite(width), 0.05 * width, 0.1)


@dataclass(frozen=True)
class ParameterBlock:
    name: str
    values: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    update_group: str = "world"

    def __post_init__(self):
        v = np.asarray(self.values, float)
        if np.any(v < self.lower) or np.any(v > self.upper):
            raise ValueError(f"block {self.name} outside its support")


@dataclass(frozen=True)
class ChainState:
    iteration: int
    blocks: dict
    log_density: float
    rng: np.random.Generator = field(repr=False, default=None)
    nan_count: int = 0

    def values(self) -> dict:
        return {k: b.values for k, b in self.blocks.items()}


def _accept(log_ratio: float, rng: np.random.Generator) -> bool:
    if np.isnan(log_ratio):
        return False
    return log_ratio >= 0 or np.log(rng.random()) < log_ratio


def mh_step(
    state: ChainState,
    block: str,
    target: Callable[[dict], float],
    proposal_scale,
    rng: np.random.Generator,
) -> tuple[ChainState, bool]:
    """One Gaussian random-walk Metropolis update of ``state.blocks[block]``.

    The proposal is reflected into the block's support, which keeps it
    symmetric, so the acceptance ratio is just the target ratio. A rejected
    move returns ``state`` itself.
    """
    scale = np.asarray(proposal_scale, float)
    if np.any(~(scale > 0)):
        raise ValueError("proposal scale must be positive")
    b = state.blocks[block]
    prop = reflect(b.values + scale * rng.standard_normal(np.shape(b.values)), b.lower, b.upper)
    vals = state.values()
    vals[block] = prop
    new_ld = target(vals)
    nan_count = state.nan_count
    if np.isnan(new_ld):
        log.warning("target returned NaN for block %s; treated as -inf", block)
        nan_count += 1
        new_ld = -np.inf
    if not _accept(new_ld - state.log_density, rng):
        if nan_count != state.nan_count:
            return replace(state, nan_count=nan_count), False
        return state, False
    blocks = dict(state.blocks)
    blocks[block] = replace(b, values=prop)
    return replace(state, blocks=blocks, log_density=float(new_ld), nan_count=nan_count), True


# --------------------------------------------------------------------------
# chain storage

def _fmt(x: float) -> str:
    return "%.17g" % x


@dataclass
class ChainStore:
    """Thinned draws of one chain, one row per stored iteration."""

    names: list
    draws: np.ndarray
    log_density: np.ndarray
    iterations: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __len__(self):
        return self.draws.shape[0]

    def column(self, name: str) -> np.ndarray:
        return self.draws[:, self.names.index(name)]

    def write(self, directory, chain_id: int | None = None) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        chain_id = self.metadata.get("chain_id", 0) if chain_id is None else chain_id
        writer = ChainWriter(directory, chain_id, self.names, self.metadata)
        with writer:
            for it, ld, row in zip(self.iterations, self.log_density, self.draws):
                writer.append(int(it), float(ld), row)
        return writer.csv_path

    @classmethod
    def read(cls, csv_path) -> "ChainStore":
        csv_path = Path(csv_path)
        with open(csv_path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = [r for r in reader if r]
        data = np.array(rows, dtype=float).reshape(len(rows), len(header))
        meta_path = csv_path.with_suffix(".json")
        meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
        return cls(
            names=header[2:],
            draws=data[:, 2:].copy(),
            log_density=data[:, 1].copy(),
            iterations=data[:, 0].astype(int),
            metadata=meta,
        )


class ChainWriter:
    """Append-only CSV writer with a JSON metadata sidecar."""

    def __init__(self, directory, chain_id, names, metadata):
        self.directory = Path(directory)
        self.csv_path = self.directory / f"chain_{chain_id}.csv"
        self.meta_path = self.csv_path.with_suffix(".json")
        self.names = list(names)
        self.metadata = dict(metadata, chain_id=chain_id)
        self._fh = None
        self.rows_written = 0

    def __enter__(self):
        self.directory.mkdir(parents=True, exist_ok=True)
        self._fh = open(self.csv_path, "w", newline="", encoding="utf-8")
        self._fh.write(",".join(["iteration", "log_density"] + self.names) + "\n")
        self._write_meta("running")
        return self

    def append(self, iteration: int, log_density: float, row) -> None:
        line = ",".join([str(iteration), _fmt(log_density)] + [_fmt(v) for v in row])
        self._fh.write(line + "\n")
        self.rows_written += 1

    def _write_meta(self, status: str, **extra) -> None:
        meta = dict(self.metadata, status=status, stored_draws=self.rows_written, **extra)
        self.meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")

    def close(self, status="complete", **extra):
        if self._fh is not None:
            self._fh.close()
            self._fh = None
        self._write_meta(status, **extra)

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            self.close("complete")
        else:
            try:
                if self._fh is not None:
                    self._fh.flush()
                self.close("partial", error=str(exc))
            except OSError:
                pass
        return False


# --------------------------------------------------------------------------
# sampler

def _initial_state(model, rng, jitter):
    world0 = np.asarray(model.initial_world(), float)
    country0 = np.asarray(model.initial_country(world0), float)
    ld0 = model.log_density(world0, country0)
    if not np.isfinite(ld0):
        raise ValueError(f"{model.name}: initial log density is not finite")
    if jitter <= 0:
        return world0, country0, ld0
    ws, cs = model.world_proposal_scales(), model.country_proposal_scales()
    for _ in range(50):
        w = reflect(world0 + jitter * ws * rng.standard_normal(world0.shape),
                    model.world_lower, model.world_upper)
        c = reflect(country0 + jitter * cs * rng.standard_normal(country0.shape),
                    model.country_lower, model.country_upper)
        ld = model.log_density(w, c)
        if np.isfinite(ld):
            return w, c, ld
    return world0, country0, ld0


def _make_state(model, world, country, ld, rng) -> ChainState:
    blocks = {
        n: ParameterBlock(n, np.array([world[i]]), model.world_lower[i:i + 1],
                          model.world_upper[i:i + 1], "world")
        for i, n in enumerate(model.world_names)
    }
    if len(model.country_ids):
        blocks["country"] = ParameterBlock("country", country, model.country_lower,
                                           model.country_upper, "country")
    return ChainState(0, blocks, float(ld), rng)


def _world_of(model, vals) -> np.ndarray:
    return np.array([vals[n][0] for n in model.world_names])


def _country_of(model, vals) -> np.ndarray:
    if "country" in vals:
        return vals["country"]
    return np.zeros((0, len(model.param_names)))


def country_sweep(model, state: ChainState, scales, rng):
    """Jointly propose every country row; accept each row independently.

    Returns the new state and a boolean acceptance vector.
    """
    vals = state.values()
    world = _world_of(model, vals)
    country = vals["country"]
    base = model.country_proposal_scales()
    current = model.country_terms(world, country)
    prop = reflect(country + (scales[:, None] * base) * rng.standard_normal(country.shape),
                   model.country_lower, model.country_upper)
    new = model.country_terms(world, prop)
    nan = np.isnan(new)
    if np.any(nan):
        log.warning("%d country proposals gave NaN; treated as -inf", int(nan.sum()))
        new = np.where(nan, -np.inf, new)
    with np.errstate(invalid="ignore"):
        ratio = new - current
    u = np.log(rng.random(len(ratio)))
    accepted = (ratio >= 0) | (u < ratio)
    accepted &= np.isfinite(new)
    if not np.any(accepted):
        return replace(state, nan_count=state.nan_count + int(nan.sum())), accepted
    out = np.where(accepted[:, None], prop, country)
    blocks = dict(state.blocks)
    blocks["country"] = replace(blocks["country"], values=out)
    ld = state.log_density + float(np.sum(ratio[accepted]))
    return replace(state, blocks=blocks, log_density=ld,
                   nan_count=state.nan_count + int(nan.sum())), accepted


def run_chain(
    model: HierarchicalModel,
    n_iter: int,
    burn_in: int = 0,
    thin: int = 1,
    seed=0,
    out_dir=None,
    chain_id: int = 0,
    metadata: dict | None = None,
    adapt_rate: float = 0.01,
    target_accept: float = 0.3,
    check_every: int = 1000,
    jitter: float = 1.0,
) -> ChainStore:
    """Run one chain and return its thinned post-burn-in draws.

    Each iteration sweeps all country rows, then every world coordinate.
    During burn-in each proposal scale is multiplied by
    ``exp(adapt_rate * (accepted - target_accept))``; scales are frozen
    afterwards. When ``out_dir`` is given, draws are appended to
    ``chain_<chain_id>.csv`` as they are produced.
    """
    if not (n_iter > burn_in >= 0):
        raise ValueError("need n_iter > burn_in >= 0")
    if thin < 1:
        raise ValueError("thin must be >= 1")
    rng = np.random.default_rng(seed)
    world, country, ld = _initial_state(model, rng, jitter)
    state = _make_state(model, world, country, ld, rng)
    n_countries = len(model.country_ids)
    world_scales = np.array(model.world_proposal_scales(), float)
    country_scales = np.ones(n_countries)
    names = model.column_names()
    meta = dict(metadata or {})
    meta.update(model=model.name, model_version=model.version, n_iter=n_iter,
                burn_in=burn_in, thin=thin, chain_id=chain_id,
                seed=seed if isinstance(seed, int) else str(seed))

    def target(vals):
        return model.log_density(_world_of(model, vals), _country_of(model, vals))

    draws, lds, its = [], [], []
    frozen_scales = (world_scales.tolist(), country_scales.tolist())
    acc_world = np.zeros(len(model.world_names))
    acc_country = np.zeros(n_countries)
    writer = ChainWriter(out_dir, chain_id, names, meta) if out_dir is not None else None
    try:
        if writer:
            writer.__enter__()
        for it in range(1, n_iter + 1):
            adapting = it <= burn_in
            if n_countries:
                state, acc = country_sweep(model, state, country_scales, rng)
                if not adapting:
                    acc_country += acc
                else:
                    country_scales *= np.exp(adapt_rate * (acc - target_accept))
            for i, n in enumerate(model.world_names):
                state, ok = mh_step(state, n, target, world_scales[i], rng)
                if adapting:
                    world_scales[i] *= np.exp(adapt_rate * (ok - target_accept))
                else:
                    acc_world[i] += ok
            state = replace(state, iteration=it)
            if it == burn_in:
                frozen_scales = (world_scales.tolist(), country_scales.tolist())
            if check_every and it % check_every == 0:
                vals = state.values()
                fresh = target(vals)
                if not np.isclose(fresh, state.log_density, rtol=1e-8, atol=1e-8):
                    raise RuntimeError(
                        f"cached log density drifted: {state.log_density} vs {fresh}")
                state = replace(state, log_density=float(fresh))
            if it > burn_in and (it - burn_in) % thin == 0:
                vals = state.values()
                row = model.pack(_world_of(model, vals), _country_of(model, vals))
                if writer:
                    writer.append(it, state.log_density, row)
                draws.append(row)
                lds.append(state.log_density)
                its.append(it)
    except OSError as exc:
        partial = ChainStore(names, np.array(draws).reshape(len(draws), len(names)),
                             np.array(lds), np.array(its, dtype=int),
                             dict(meta, status="partial"))
        if writer:
            writer.__exit__(type(exc), exc, None)
        raise ChainStorageError(f"chain {chain_id}: storage failed: {exc}", partial) from exc
    kept = n_iter - burn_in
    meta.update(
        status="complete",
        acceptance_world=dict(zip(model.world_names, (acc_world / kept).round(4).tolist())),
        acceptance_country_mean=float(acc_country.mean() / kept) if n_countries else None,
        nan_count=state.nan_count,
        world_scales_after_burn_in=frozen_scales[0],
        world_scales_final=world_scales.tolist(),
        country_scales_after_burn_in=frozen_scales[1],
        country_scales_final=country_scales.tolist(),
    )
    if writer:
        writer.metadata = meta
        writer.__exit__(None, None, None)
    return ChainStore(names, np.array(draws).reshape(len(draws), len(names)),
                      np.array(lds), np.array(its, dtype=int), meta)


def run_chains(model, n_chains: int, n_iter: int, burn_in: int = 0, thin: int = 1,
               seed: int = 0, out_dir=None, metadata=None, **kw) -> list[ChainStore]:
    """Independent chains with seeds spawned from one root seed."""
    children = np.random.SeedSequence(seed).spawn(n_chains)
    stores = []
    for cid, child in enumerate(children):
        st = run_chain(model, n_iter, burn_in, thin, seed=child, out_dir=out_dir,
                       chain_id=cid, metadata=dict(metadata or {}, root_seed=seed), **kw)
        st.metadata["seed"] = seed
        stores.append(st)
    return stores


def load_chains(directory) -> list[ChainStore]:
    paths = sorted(Path(directory).glob("chain_*.csv"),
                   key=lambda p: int(p.stem.split("_")[1]))
    if not paths:
        raise FileNotFoundError(f"no chain files in {directory}")
    return [ChainStore.read(p) for p in paths]


# --------------------------------------------------------------------------
# diagnostics

def _autocorr(x: np.ndarray) -> np.ndarray:
    n = x.size
    x = x - x.mean()
    f = np.fft.rfft(x, 2 * n)
    ac = np.fft.irfft(f * np.conj(f))[:n]
    return ac / ac[0] if ac[0] > 0 else np.zeros(n)


def effective_sample_size(chains: np.ndarray) -> float:
    """ESS pooled over chains (rows), truncated by Geyer's initial positive sequence."""
    chains = np.atleast_2d(chains)
    m, n = chains.shape
    if n < 4 or np.all(chains.var(axis=1) == 0):
        return float("nan")
    rho = np.mean([_autocorr(c) for c in chains], axis=0)
    tau = -1.0
    for t in range(0, n - 1, 2):
        pair = rho[t] + rho[t + 1]
        if pair <= 0:
            break
        tau += 2 * pair
    return float(m * n / max(tau, 1e-12))


def potential_scale_reduction(chains: np.ndarray) -> float:
    """Potential scale reduction for chains given as rows.

    ``sqrt(1 + B/(n W))`` with both variances taken with divisor n, so that
    chains with identical means give exactly 1.
    """
    chains = np.atleast_2d(chains)
    m, n = chains.shape
    within = chains.var(axis=1, ddof=0).mean()
    if within <= 0:
        return float("nan")
    between = chains.mean(axis=1).var(ddof=1) if m > 1 else 0.0
    return float(np.sqrt(1.0 + between / within))


@dataclass
class DiagnosticsReport:
    names: list
    rhat: np.ndarray
    ess: np.ndarray
    n_chains: int
    draws_per_chain: int
    weak: bool = False

    @property
    def flagged(self) -> list[str]:
        return [n for n, r in zip(self.names, self.rhat) if np.isfinite(r) and r > RHAT_THRESHOLD]

    @property
    def converged(self) -> bool:
        return not self.flagged

    def to_dict(self) -> dict:
        def clean(v):
            return None if not np.isfinite(v) else float(v)
        return {
            "n_chains": self.n_chains,
            "draws_per_chain": self.draws_per_chain,
            "single_chain_split": self.weak,
            "rhat_threshold": RHAT_THRESHOLD,
            "flagged": self.flagged,
            "parameters": {
                n: {"rhat": clean(r), "ess": clean(e)}
                for n, r, e in zip(self.names, self.rhat, self.ess)
            },
        }


def diagnostics(stores: Sequence[ChainStore]) -> DiagnosticsReport:
    """Potential-scale-reduction and ESS for every stored scalar.

    With a single chain the two halves are compared instead; the report is
    marked ``weak``.
    """
    stores = list(stores)
    if not stores:
        raise ValueError("no chains supplied")
    names = stores[0].names
    for s in stores[1:]:
        if s.names != names:
            raise ValueError("chains come from different models")
    n = min(len(s) for s in stores)
    if n < 4:
        raise ValueError("chains too short for diagnostics")
    arr = np.stack([s.draws[:n] for s in stores])  # (m, n, p)
    weak = len(stores) == 1
    if weak:
        half = n // 2
        arr = np.stack([arr[0, :half], arr[0, half:2 * half]])
    rhat = np.array([potential_scale_reduction(arr[:, :, j]) for j in range(arr.shape[2])])
    ess = np.array([effective_sample_size(arr[:, :, j]) for j in range(arr.shape[2])])
    return DiagnosticsReport(list(names), rhat, ess, len(stores), n, weak)


# --------------------------------------------------------------------------
# posterior predictive seeding

@dataclass(frozen=True)
class PosteriorSample:
    draw_id: str
    values: np.ndarray
    names: tuple

    def __getitem__(self, name):
        return self.values[self.names.index(name)]


def posterior_predictive_draws(stores, n_trajectories: int = DEFAULT_N_TRAJECTORIES,
                               rng=None, replace_draws: bool | None = None) -> list[PosteriorSample]:
    """Resample stored draws (pooled over chains) to seed trajectory simulation."""
    if isinstance(stores, ChainStore):
        stores = [stores]
    rng = np.random.default_rng(rng)
    pool, ids = [], []
    for s in stores:
        cid = s.metadata.get("chain_id", 0)
        pool.append(s.draws)
        ids.extend(f"c{cid}i{int(it)}" for it in s.iterations)
    if not ids:
        raise ValueError("chain store is empty")
    pool = np.concatenate(pool)
    names = tuple(stores[0].names)
    if replace_draws is None:
        replace_draws = n_trajectories > len(ids)
    if not replace_draws and n_trajectories > len(ids):
        raise ValueError("more trajectories than stored draws without replacement")
    idx = rng.choice(len(ids), size=n_trajectories, replace=replace_draws)
    return [PosteriorSample(ids[i], pool[i], names) for i in idx]
