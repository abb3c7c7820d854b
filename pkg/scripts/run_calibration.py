"""Self-consistency calibration of Phase III projection intervals via ``validate``.

    python scripts/run_calibration.py --out-dir calib [--replications 50] [--tfr tfr.csv]

Without ``--tfr`` the generator hyperparameters come from the config
defaults; with it they are the posterior means of a fit to that file.
"""

import argparse
import json
import sys
from pathlib import Path

from bayespop.cli import main as cli

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out-dir", default="calib")
    ap.add_argument("--replications", type=int, default=50)
    ap.add_argument("--seed", type=int, default=11)
    ap.add_argument("--n-iter", type=int, default=3000)
    ap.add_argument("--tfr")
    a = ap.parse_args()
    out = Path(a.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = {"seed": a.seed,
           "mcmc": {"n_chains": 2, "n_iter": a.n_iter, "burn_in": a.n_iter // 3, "thin": 2},
           "validate": {"model": "tfr-phase3-hier", "replications": a.replications}}
    if a.tfr:
        cfg["paths"] = {"tfr": str(Path(a.tfr).resolve())}
    (out / "config.json").write_text(json.dumps(cfg, indent=2) + "\n")
    code = cli(["validate", "--config", str(out / "config.json"), "--out-dir", str(out)])
    if code != 1:
        rep = json.loads((out / "validate" / "calibration_report.json").read_text())
        print(f"80% coverage {rep['coverage80']:.3f} (target 0.70-0.90), "
              f"95% coverage {rep['coverage95']:.3f} (target 0.88-0.99), "
              f"{rep['n_scored']} held-out values")
    sys.exit(code)
