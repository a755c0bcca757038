"""Adiabatic scaling study: pumped charge against the instantaneous-projection prediction.

    python3 scripts/eps_scaling.py [--flat-order 1] [--eps 0.1 0.05 0.025 0.0125] [--size 32]
"""
import argparse
from dataclasses import replace
from pathlib import Path

from polarlab import config
from polarlab.harness import emit_report, run_experiment

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--flat-order", type=int, choices=(1, 2), default=1)
    ap.add_argument("--eps", type=float, nargs="+")
    ap.add_argument("--size", type=int)
    ap.add_argument("--out")
    args = ap.parse_args()

    cfg = config.load(CONFIGS / f"eps_scaling_fo{args.flat_order}.toml")
    ex = cfg.experiment
    if args.eps:
        ex = replace(ex, eps=tuple(args.eps))
    if args.size:
        ex = replace(ex, sizes=(args.size,))
    cfg = replace(cfg, experiment=ex)
    config.validate(cfg)

    rep = run_experiment(cfg)
    print(f"{'eps':>10} {'exact':>14} {'projection':>14} {'|diff|':>10}")
    for r in rep.rows:
        if r["task_id"] != "summary":
            print(f"{r['eps']:10.5g} {r['dP_exact']:14.10f} {r['dP_ksv']:14.10f} {abs(r['dP_exact'] - r['dP_ksv']):10.3e}")
    for key, s in rep.summary.items():
        print(f"{key}: log-log slope {s['slope']:.3f}")
    emit_report(rep, args.out or cfg.output)


if __name__ == "__main__":
    main()
