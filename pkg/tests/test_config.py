import json

import pytest
from hypothesis import given, settings, strategies as st

from bayespop.config import (
    ConfigError,
    RunConfig,
    config_hash,
    dumps,
    load_config,
    loads,
    to_dict,
)


def test_default_round_trip():
    cfg = RunConfig()
    assert loads(dumps(cfg)) == cfg
    assert dumps(loads(dumps(cfg))) == dumps(cfg)


@settings(max_examples=50)
@given(seed=st.integers(0, 2**31), n_iter=st.integers(2, 10_000), A1=st.floats(0.1, 20),
       mode=st.sampled_from(["sample", "median"]), country=st.text(max_size=8),
       models=st.lists(st.sampled_from(["tfr-phase2", "tfr-phase3-fixed", "e0", "gap"]),
                       min_size=1, max_size=4, unique=True))
def test_round_trip_property(seed, n_iter, A1, mode, country, models):
    cfg = RunConfig(seed=seed, models=tuple(models))
    cfg.mcmc.n_iter, cfg.mcmc.burn_in = n_iter, n_iter // 2
    cfg.e0.A1 = A1
    cfg.simulation.mode = mode
    cfg.projection.country_id = country
    back = loads(dumps(cfg))
    assert back == cfg
    assert config_hash(back) == config_hash(cfg)


def test_unknown_field_reports_path():
    with pytest.raises(ConfigError, match=r"^mcmc\.n_iterations: unknown config field"):
        loads(json.dumps({"mcmc": {"n_iterations": 10}}))
    with pytest.raises(ConfigError, match=r"^e0\.A1: expected a number"):
        loads(json.dumps({"e0": {"A1": "big"}}))
    with pytest.raises(ConfigError, match=r"^mcmc\.burn_in"):
        loads(json.dumps({"mcmc": {"n_iter": 10, "burn_in": 20}}))
    with pytest.raises(ConfigError, match="models"):
        loads(json.dumps({"models": ["tfr-phase4"]}))


def test_hash_changes_iff_config_changes():
    a, b = RunConfig(), RunConfig()
    assert config_hash(a) == config_hash(b)
    b.gap.cap = 17.5
    assert config_hash(a) != config_hash(b)
    b.gap.cap = 18.0
    assert config_hash(a) == config_hash(b)


def test_relative_paths_resolve_against_config_dir(tmp_path):
    (tmp_path / "sub").mkdir()
    p = tmp_path / "sub" / "cfg.json"
    p.write_text(json.dumps({"paths": {"tfr": "data/tfr.csv", "e0": "/abs/e0.csv"}}))
    cfg = load_config(p)
    assert cfg.paths.tfr == str(tmp_path / "sub" / "data" / "tfr.csv")
    assert cfg.paths.e0 == "/abs/e0.csv"


def test_every_constant_serialised():
    d = to_dict(RunConfig())
    assert d["gap"]["M"] == 86.2 and d["gap"]["cap"] == 18.0
    assert d["e0"]["A1"] == 4.4 and d["e0"]["A2"] == 0.5
    assert d["tfr"]["floor"] == 0.5
