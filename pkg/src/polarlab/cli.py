"""Command-line entry point: ``polarlab <mode> --config FILE [--out DIR] [--format csv|json|both]``.

Exit codes: 0 success, 2 invalid configuration, 3 failed hypothesis check,
4 numerical guard (gap closing, step overflow, splitting lost).
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

from .config import MODES, ConfigError, load
from .errors import HypothesisError, PolarlabError
from .harness import WORKERS_ENV, emit_report, run_experiment

EXIT_OK, EXIT_CONFIG, EXIT_HYPOTHESIS, EXIT_NUMERIC = 0, 2, 3, 4

log = logging.getLogger("polarlab")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="polarlab", description=__doc__.splitlines()[0],
                                 epilog=f"worker processes: ${WORKERS_ENV} (default: CPU count)")
    sub = ap.add_subparsers(dest="mode", required=True)
    for mode in MODES:
        p = sub.add_parser(mode)
        p.add_argument("--config", required=True, help="TOML experiment file")
        p.add_argument("--out", help="output directory (overrides the config)")
        p.add_argument("--format", choices=("csv", "json", "both"), default="both")
    return ap


def _print_summary(report) -> None:
    for row in report.rows:
        shown = {k: row[k] for k in ("task_id", "L", "eps", "seed", "dP_exact", "dP_ksv", "chern",
                                     "r54", "slope", "gap") if row.get(k) is not None}
        print("  ".join(f"{k}={v:.10g}" if isinstance(v, float) else f"{k}={v}" for k, v in shown.items()))
    for key, val in report.summary.items():
        print(f"summary {key}: {val}")


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        cfg = load(args.config)
    except ConfigError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    cfg = replace(cfg, mode=args.mode)
    if args.out:
        cfg = replace(cfg, output=args.out)
    try:
        report = run_experiment(cfg)
    except HypothesisError as exc:
        log.error("%s", exc)
        return EXIT_HYPOTHESIS
    except PolarlabError as exc:
        log.error("numerical guard: %s", exc)
        return EXIT_NUMERIC
    try:
        paths = emit_report(report, cfg.output, args.format)
    except OSError as exc:
        log.error("cannot write report: %s", exc)
        return EXIT_CONFIG
    _print_summary(report)
    for p in paths:
        log.info("wrote %s", p)
    if args.mode == "check-hypotheses" and not all(r.get("passed", True) for r in report.rows):
        return EXIT_HYPOTHESIS
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
