"""Chern number of the pump over an ensemble of disorder realizations.

    python3 scripts/disorder_chern.py [--strength 0.5] [--seeds 10] [--size 64]
"""
import argparse
from dataclasses import replace
from pathlib import Path

from polarlab import config
from polarlab.harness import emit_report, run_experiment

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--strength", type=float)
    ap.add_argument("--seeds", type=int)
    ap.add_argument("--size", type=int)
    ap.add_argument("--out")
    args = ap.parse_args()

    cfg = config.load(CONFIGS / "disorder_chern.toml")
    if args.strength is not None:
        cfg = replace(cfg, model=replace(cfg.model, W_dis=args.strength))
    if args.seeds:
        cfg = replace(cfg, experiment=replace(cfg.experiment, seed_count=args.seeds))
    if args.size:
        cfg = replace(cfg, experiment=replace(cfg.experiment, sizes=(args.size,)))
    config.validate(cfg)

    rep = run_experiment(cfg)
    print(f"{'seed':>22} {'chern':>14} {'gap':>8}")
    for r in rep.rows:
        if r["task_id"] != "summary":
            print(f"{r['seed']:>22} {r['chern']:14.10f} {r['hypothesis_gap']:8.4f}")
    s = rep.summary["chern"]
    print(f"mean {s['mean']:.10f} +- {s['stderr']:.2e} over {s['count']} realizations")
    emit_report(rep, args.out or cfg.output)


if __name__ == "__main__":
    main()
