"""Residuals of the superadiabatic expansion and, optionally, closeness of the evolved state.

    python3 scripts/residuals.py [--config residuals_n2] [--closeness]
"""
import argparse
from dataclasses import replace
from pathlib import Path

from polarlab import config
from polarlab.harness import emit_report, run_experiment

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default="residuals_n2", help="config name under configs/ or a path")
    ap.add_argument("--closeness", action="store_true", help="also evolve the refined initial state")
    ap.add_argument("--out")
    args = ap.parse_args()

    path = Path(args.config)
    cfg = config.load(path if path.suffix == ".toml" else CONFIGS / f"{args.config}.toml")
    if args.closeness:
        cfg = replace(cfg, experiment=replace(cfg.experiment, closeness=True))

    rep = run_experiment(cfg)
    orders = sorted(rep.rows[0]["r55"], key=int)
    head = " ".join(f"{'r55[' + m + ']':>10}" for m in orders)
    print(f"{'eps':>10} {'r54':>10} {head} {'endpoints':>10}" + (f" {'evolved':>10}" if args.closeness or cfg.experiment.closeness else ""))
    for r in rep.rows:
        line = f"{r['eps']:10.5g} {r['r54']:10.3e} " + " ".join(f"{r['r55'][m]:10.3e}" for m in orders)
        line += f" {r['p_star_distance']['endpoints']:10.3e}"
        if "closeness_max" in r:
            line += f" {r['closeness_max']:10.3e}"
        print(line)
    print("slopes:", ", ".join(f"{k} {v:.3f}" if v is not None else f"{k} n/a" for k, v in rep.rows[0]["slopes"].items()))
    emit_report(rep, args.out or cfg.output)


if __name__ == "__main__":
    main()
