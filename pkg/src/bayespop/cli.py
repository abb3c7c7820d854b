"""Command-line entry point: ``bayespop {estimate,project,validate,diagnose}``.

Exit codes: 0 success, 1 input or configuration error, 2 completed with
warnings (unconverged chains, coverage outside target). Log verbosity comes
from ``BAYESPOP_LOG_LEVEL`` (DEBUG, INFO, WARNING, ERROR; default WARNING).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import pipeline
from .config import ConfigError, RunConfig, load_config, validate_config
from .io import InputError
from .mcmc import ChainStorageError

LOG_ENV = "BAYESPOP_LOG_LEVEL"
log = logging.getLogger("bayespop")


def _setup_logging() -> None:
    level = os.environ.get(LOG_ENV, "WARNING").upper()
    if level not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
        level = "WARNING"
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s",
                        stream=sys.stderr, force=True)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bayespop", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", required=True, help="JSON run configuration")
        sp.add_argument("--seed", type=int, default=None, help="overrides the config seed")
        sp.add_argument("--out-dir", required=True, help="directory for outputs")

    est = sub.add_parser("estimate", help="fit the configured models")
    common(est)
    est.add_argument("--model", action="append", choices=pipeline.MODELS,
                     help="fit only this model (repeatable)")

    prj = sub.add_parser("project", help="simulate trajectories and project population")
    common(prj)
    prj.add_argument("--country", help="overrides projection.country_id")
    prj.add_argument("--chains", help="estimate output directory (default: --out-dir)")
    prj.add_argument("--n-trajectories", type=int)
    prj.add_argument("--median", action="store_true", help="single posterior-median trajectory")

    val = sub.add_parser("validate", help="holdout calibration of projection intervals")
    common(val)
    val.add_argument("--holdout-year", type=int)
    val.add_argument("--replications", type=int)
    val.add_argument("--model", choices=("tfr-phase3-hier", "e0"))

    dia = sub.add_parser("diagnose", help="convergence diagnostics for stored chains")
    common(dia)
    dia.add_argument("--chains", help="chain directory (default: paths.chains or --out-dir)")
    return p


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    if args.seed is not None:
        cfg.seed = args.seed
    if args.command == "estimate" and args.model:
        cfg.models = tuple(args.model)
    if args.command == "project":
        if args.country:
            cfg.projection.country_id = args.country
        if args.chains:
            cfg.paths.chains = args.chains
        if args.n_trajectories is not None:
            cfg.simulation.n_trajectories = args.n_trajectories
        if args.median:
            cfg.simulation.mode = "median"
    if args.command == "validate":
        if args.holdout_year is not None:
            cfg.validate.holdout_year = args.holdout_year
        if args.replications is not None:
            cfg.validate.replications = args.replications
        if args.model:
            cfg.validate.model = args.model
    return validate_config(cfg)


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    out_dir = Path(args.out_dir)
    try:
        cfg = _apply_overrides(load_config(args.config), args)
        out_dir.mkdir(parents=True, exist_ok=True)
        if args.command == "estimate":
            code, report = pipeline.estimate(cfg, out_dir)
        elif args.command == "project":
            code, report = pipeline.project(cfg, out_dir)
        elif args.command == "validate":
            code, report = pipeline.validate(cfg, out_dir)
        else:
            code, report = pipeline.diagnose(cfg, out_dir, getattr(args, "chains", None))
    except InputError as exc:
        print(f"error: {len(exc.problems)} input problem(s)", file=sys.stderr)
        for prob in exc.problems:
            print(f"  {prob}", file=sys.stderr)
        return pipeline.EXIT_ERROR
    except (ConfigError, ValueError, FileNotFoundError, ChainStorageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return pipeline.EXIT_ERROR
    summary = {"command": args.command, "exit_code": code}
    if args.command == "validate":
        summary.update(coverage80=report["coverage80"], coverage95=report["coverage95"])
    print(json.dumps(summary, sort_keys=True))
    if code == pipeline.EXIT_WARN:
        log.warning("%s completed with warnings; see reports in %s", args.command, out_dir)
    return code


if __name__ == "__main__":
    sys.exit(main())
