"""Task expansion, parallel execution and report files."""
from __future__ import annotations

import csv
import io
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from itertools import product
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .config import ExperimentConfig
from .errors import HypothesisError
from .models import validate_hypotheses
from .observables import chern_number, polarization_exact, polarization_ksv
from .spectral import projection_path
from .superadiabatic import evolved_closeness, expansion_residuals, expansion_terms, loglog_slope

CSV_HEADER = ("task_id", "mode", "L", "eps", "seed", "k", "dP_exact", "dP_ksv", "chern", "identity_defect",
              "r54", "r55_max", "r56_max", "slope", "gap", "wall_ms")
WORKERS_ENV = "POLARLAB_WORKERS"

# base task kind for each mode, and the axes whose values become separate tasks
_TASK_KIND = {"run": "run", "sweep-eps": "run", "sweep-size": "run", "sweep-seed": "chern",
              "chern": "chern", "check-hypotheses": "check-hypotheses", "residuals": "residuals"}


@dataclass(frozen=True)
class Task:
    index: int
    kind: str
    L: int
    seed: int
    eps: float | None


@dataclass
class RunReport:
    mode: str
    config: dict
    config_hash: str
    rows: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    version: str = __version__

    def to_dict(self) -> dict:
        return {"mode": self.mode, "version": self.version, "config_hash": self.config_hash,
                "config": self.config, "rows": self.rows, "summary": self.summary}


def worker_count() -> int:
    raw = os.environ.get(WORKERS_ENV)
    if raw:
        return max(1, int(raw))
    return os.cpu_count() or 1


def expand_tasks(cfg: ExperimentConfig, kind: str | None = None) -> list[Task]:
    kind = kind or _TASK_KIND[cfg.mode]
    ex = cfg.experiment
    eps_axis = list(ex.eps) if kind == "run" else [None]
    combos = product(ex.sizes, cfg.disorder_seeds(), eps_axis)
    return [Task(i, kind, int(L), int(s), e) for i, (L, s, e) in enumerate(combos)]


def _num(x):
    if x is None:
        return None
    x = float(x)
    return None if np.isnan(x) else x


def _row(task: Task, cfg: ExperimentConfig, **values) -> dict:
    ex = cfg.experiment
    row = {key: None for key in CSV_HEADER}
    row.update(task_id=str(task.index), mode=task.kind, L=task.L, eps=task.eps, seed=task.seed, k=ex.direction,
               time_points=ex.time_points)
    row.update({k: _jsonable(v) for k, v in values.items()})
    return row


def _grid(cfg: ExperimentConfig) -> np.ndarray:
    return np.linspace(0.0, cfg.protocol.period, cfg.experiment.time_points)


def _gate(cfg, spec, prot, grid):
    rep = validate_hypotheses(spec, prot, cfg.experiment.fermi_energy, grid)
    if not rep.passed:
        raise HypothesisError(f"hypothesis check failed for L = {spec.lattice.sizes}, seed = {spec.disorder_seed}: "
                              f"gap {rep.gap:.3e} at t = {rep.gap_time:.4g}")
    return rep


def run_task(cfg: ExperimentConfig, task: Task) -> list[dict]:
    """Execute one task single-threaded (so results do not depend on BLAS threading)."""
    with threadpool_limits(limits=1):
        start = time.perf_counter()
        rows = _dispatch(cfg, task)
        wall = 1e3 * (time.perf_counter() - start)
    for r in rows:
        r["wall_ms"] = wall
    return rows


def _dispatch(cfg: ExperimentConfig, task: Task) -> list[dict]:
    ex = cfg.experiment
    spec = cfg.model_spec(task.L, task.seed)
    prot = cfg.driving(spec)
    grid = _grid(cfg)
    k, conv, ef = ex.direction, ex.convention, ex.fermi_energy

    if task.kind == "check-hypotheses":
        rep = validate_hypotheses(spec, prot, ef, grid)
        return [_row(task, cfg, gap=rep.gap, passed=rep.passed, gap_time=rep.gap_time,
                     covariance_defects=rep.covariance_defects, current_ratios=rep.current_ratios,
                     warnings=rep.warnings)]

    hyp = _gate(cfg, spec, prot, grid)
    if task.kind == "chern":
        path = projection_path(spec, prot, grid, ef)
        ch = chern_number(path, k, conv)
        return [_row(task, cfg, chern=ch.value, gap=path.gap.g, quadrature_error=ch.refinement_error,
                     hypothesis_gap=hyp.gap)]

    if task.kind == "run":
        path = projection_path(spec, prot, grid, ef)
        ksv = polarization_ksv(path, k, conv)
        ch = chern_number(path, k, conv).value if path.cyclic_defect < 1e-12 else None
        del path
        exact = polarization_exact(spec, prot, ef, task.eps, grid, k, cfg.steps_per_unit(task.eps), conv,
                                   check_hypotheses=False)
        return [_row(task, cfg, dP_exact=exact.value, dP_ksv=ksv.value, chern=ch,
                     identity_defect=exact.identity_defect, gap=hyp.gap, substeps=exact.substeps,
                     unitarity_defect=exact.unitarity_defect, quadrature_error=ksv.refinement_error)]

    if task.kind == "residuals":
        fam = expansion_terms(spec, prot, ef, grid, ex.order)
        rep = expansion_residuals(fam, ex.eps, k, conv)
        rows = []
        for j, eps in enumerate(rep.eps):
            extra = {}
            if ex.closeness:
                c = evolved_closeness(fam, eps, cfg.steps_per_unit(eps))
                extra = dict(closeness_max=c.max_deviation, closeness_half=c.half_period_deviation)
            sub = Task(task.index, task.kind, task.L, task.seed, eps)
            row = _row(sub, cfg, r54=rep.r54[j], r55_max=max(rep.r55[m][j] for m in rep.r55),
                       r56_max=max(rep.r56[m][j] for m in rep.r56), slope=rep.slopes["r54"], gap=fam.path.gap.g,
                       order=ex.order, r55={str(m): rep.r55[m][j] for m in rep.r55},
                       r56={str(m): rep.r56[m][j] for m in rep.r56},
                       slopes={key: _num(v) for key, v in rep.slopes.items()},
                       p_star_distance={key: v[j] for key, v in rep.closeness.items()}, **extra)
            row["task_id"] = f"{task.index}.{j}"
            rows.append(row)
        return rows
    raise ValueError(f"unknown task kind {task.kind!r}")


def _execute(cfg: ExperimentConfig, tasks: list[Task], workers: int | None) -> list[dict]:
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(tasks) <= 1:
        results = [run_task(cfg, t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
            results = list(pool.map(run_task, [cfg] * len(tasks), tasks))
    return [row for rows in results for row in rows]


def _summaries(cfg: ExperimentConfig, rows: list[dict]) -> tuple[dict, list[dict]]:
    summary, extra_rows = {}, []
    if cfg.mode == "sweep-eps":
        groups = {}
        for r in rows:
            groups.setdefault((r["L"], r["seed"]), []).append(r)
        for (L, seed), rs in groups.items():
            eps = [r["eps"] for r in rs]
            dev = [abs(r["dP_exact"] - r["dP_ksv"]) for r in rs]
            slope = loglog_slope(eps, dev)
            summary[f"L={L},seed={seed}"] = {"eps": eps, "deviation": dev, "slope": _num(slope)}
            row = {key: None for key in CSV_HEADER}
            row.update(task_id="summary", mode=cfg.mode, L=L, seed=seed, k=cfg.experiment.direction, slope=_num(slope))
            extra_rows.append(row)
    elif cfg.mode == "sweep-seed":
        ch = np.array([r["chern"] for r in rows], dtype=float)
        stderr = float(ch.std(ddof=1) / np.sqrt(len(ch))) if len(ch) > 1 else 0.0
        summary["chern"] = {"mean": float(ch.mean()), "stderr": stderr, "count": len(ch),
                            "identical": bool(np.all(ch == ch[0]))}
        row = {key: None for key in CSV_HEADER}
        row.update(task_id="summary", mode=cfg.mode, k=cfg.experiment.direction, chern=float(ch.mean()))
        extra_rows.append(row)
    elif cfg.mode == "residuals" and cfg.experiment.closeness:
        groups = {}
        for r in rows:
            groups.setdefault((r["L"], r["seed"]), []).append(r)
        for (L, seed), rs in groups.items():
            eps = [r["eps"] for r in rs]
            summary[f"L={L},seed={seed}"] = {
                "closeness_slope": _num(loglog_slope(eps, [r["closeness_max"] for r in rs])),
                "slopes": rs[0]["slopes"]}
    return summary, extra_rows


def run_experiment(cfg: ExperimentConfig, workers: int | None = None) -> RunReport:
    """Run the configured mode; raises on hypothesis or numerical-guard failures."""
    tasks = expand_tasks(cfg)
    rows = _execute(cfg, tasks, workers)
    summary, extra = _summaries(cfg, rows)
    return RunReport(cfg.mode, cfg.to_dict(), cfg.content_hash(), rows + extra, summary)


def sweep(cfg: ExperimentConfig, axis: str, workers: int | None = None) -> RunReport:
    """Run the base experiment for each value along ``axis`` (epsilon, size or seed)."""
    modes = {"epsilon": "sweep-eps", "size": "sweep-size", "seed": "sweep-seed"}
    if axis not in modes:
        raise ValueError(f"axis must be one of {tuple(modes)}")
    return run_experiment(replace(cfg, mode=modes[axis]), workers)


# ----------------------------------------------------------------------------
# output


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def csv_text(report: RunReport, include_wall: bool = False) -> str:
    """CSV body with the fixed header; wall times are omitted unless asked for, keeping files reproducible."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for row in report.rows:
        w.writerow([_fmt(row.get(key)) if key != "wall_ms" or include_wall else "" for key in CSV_HEADER])
    return buf.getvalue()


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        return None if np.isnan(x) else float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def emit_report(report: RunReport, out_dir, fmt: str = "both") -> list[Path]:
    if fmt not in ("csv", "json", "both"):
        raise ValueError("format must be csv, json or both")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if fmt in ("csv", "both"):
        p = out / "report.csv"
        p.write_text(csv_text(report))
        written.append(p)
    if fmt in ("json", "both"):
        p = out / "report.json"
        p.write_text(json.dumps(_jsonable(report.to_dict()), indent=2, sort_keys=True))
        written.append(p)
    return written


def load_json_report(path) -> RunReport:
    d = json.loads(Path(path).read_text())
    return RunReport(d["mode"], d["config"], d["config_hash"], d["rows"], d["summary"], d["version"])
