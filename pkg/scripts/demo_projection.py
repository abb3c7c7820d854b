"""End-to-end demo: synthetic inputs -> estimate -> project, through the CLI.

    python scripts/demo_projection.py --out-dir demo_out [--seed 1] [--n-iter 3000]

Writes the input CSVs, a config, the chains and the projection outputs under
``--out-dir`` and prints the potential support ratio fan for one country.
"""

import argparse
import json
import sys
from pathlib import Path

from bayespop.cli import main as cli
from bayespop.synthetic import synthetic_panel, write_fixture
from bayespop.trajectory import read_quantiles


def run(out_dir: Path, seed: int, n_iter: int, n_countries: int, country: str) -> int:
    data = out_dir / "data"
    paths = write_fixture(data, synthetic_panel(seed, n_countries=n_countries))
    cfg = {
        "seed": seed,
        "mcmc": {"n_chains": 3, "n_iter": n_iter, "burn_in": n_iter // 3, "thin": 4},
        "simulation": {"n_trajectories": 1000, "horizon": 18},
        "paths": {k: str(Path(v).relative_to(out_dir)) for k, v in paths.items()},
        "projection": {"country_id": country},
    }
    cfg_path = out_dir / "config.json"
    cfg_path.write_text(json.dumps(cfg, indent=2) + "\n")
    common = ["--config", str(cfg_path), "--out-dir", str(out_dir / "run")]
    code = cli(["estimate", *common])
    if code == 1:
        return code
    code = max(code, cli(["project", *common]))
    q = read_quantiles(out_dir / "run" / "projection" / "quantiles.csv")["psr"]
    print(f"\npotential support ratio, {country}")
    print("period   " + "  ".join(f"p{p:<6g}" for p in q.probs))
    for label, row in zip(q.period_labels, q.values):
        print(f"{label:8s} " + "  ".join(f"{v:7.2f}" for v in row))
    return code


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out-dir", default="demo_out")
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--n-iter", type=int, default=3000)
    ap.add_argument("--n-countries", type=int, default=12)
    ap.add_argument("--country", default="C00")
    a = ap.parse_args()
    out = Path(a.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sys.exit(run(out, a.seed, a.n_iter, a.n_countries, a.country))
