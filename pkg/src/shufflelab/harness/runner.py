"""Seeded experiment sweeps: every (algorithm, T, replicate) cell is an independent run."""

from __future__ import annotations

import csv
import io
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from ..optimizers import OptimizerConfig, residual_bound, run_optimizer, theorem_step_size
from ..problems import FiniteSumProblem, ProblemConstants, problem_constants
from ..ratefit import estimate_rate
from ..rng import derive_seed
from .config import ExperimentSpec
from .svgplot import loglog_svg

log = logging.getLogger(__name__)

RUNS_COLUMNS = ("algorithm", "T", "seed", "final_sq_error", "final_gap", "exited_ball", "max_residual_ratio", "error_message")
SUMMARY_COLUMNS = ("algorithm", "T", "mean_sq_error", "stderr", "replicates")
RATES_COLUMNS = ("algorithm", "exponent", "intercept", "r_squared", "ci_halfwidth", "n_points")


def fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".17g")


@dataclass(frozen=True)
class Cell:
    alg_index: int
    T: int
    rep: int


@dataclass(frozen=True)
class CellResult:
    cell: Cell
    algorithm: str
    seed: int
    final_sq_error: Optional[float] = None
    final_gap: Optional[float] = None
    exited_ball: Optional[bool] = None
    max_residual_ratio: Optional[float] = None
    error_message: str = ""

    def row(self):
        return (self.algorithm, fmt(self.cell.T), fmt(self.seed), fmt(self.final_sq_error), fmt(self.final_gap),
                fmt(self.exited_ball), fmt(self.max_residual_ratio), self.error_message)


def default_radius(problem: FiniteSumProblem) -> float:
    dist = float(np.linalg.norm(np.ones(problem.d) - problem.minimizer))
    return max(dist, 1.0)


def step_size_for(alg, T: int, constants: ProblemConstants, n: int):
    if isinstance(alg.step_rule, str):
        return theorem_step_size(alg.step_rule, T, constants, n)
    return None


def cell_seed(spec: ExperimentSpec, cell: Cell) -> int:
    return derive_seed(spec.master_seed, cell.alg_index, cell.T, cell.rep)


def run_cell(spec: ExperimentSpec, problem: FiniteSumProblem, constants: ProblemConstants, cell: Cell) -> CellResult:
    """Run one cell; failures are returned as a row with an error message."""
    alg = spec.algorithms[cell.alg_index]
    seed = cell_seed(spec, cell)
    base = dict(cell=cell, algorithm=alg.label, seed=seed)
    try:
        rule = step_size_for(alg, cell.T, constants, problem.n)
        gamma = rule.gamma if rule is not None else float(alg.step_rule)
        config = OptimizerConfig(alg.kind, gamma, cell.T, seed=seed, record_every=spec.record_every or max(cell.T, 1),
                                 D=constants.D)
        rec = run_optimizer(problem, config)
    except Exception as exc:  # a bad cell must not stop the sweep
        return CellResult(**base, error_message=f"{type(exc).__name__}: {exc}")
    ratio = None
    if rec.epoch_residual_norms:
        bound = residual_bound(problem.n, gamma, constants)
        ratio = max(rec.epoch_residual_norms) / bound if bound > 0 else (0.0 if max(rec.epoch_residual_norms) == 0 else math.inf)
    msg = "" if rec.diverged_at is None else f"diverged at k={rec.diverged_at}"
    return CellResult(**base, final_sq_error=rec.final_sq_error, final_gap=rec.final_gap,
                      exited_ball=rec.exited_ball, max_residual_ratio=ratio, error_message=msg)


# worker-process state, set once per process
_WORKER: dict = {}


def _init_worker(spec: ExperimentSpec):
    problem = spec.problem.build()
    _WORKER["spec"] = spec
    _WORKER["problem"] = problem
    _WORKER["constants"] = problem_constants(problem, spec.D or default_radius(problem))


def _worker_run(cell: Cell) -> CellResult:
    return run_cell(_WORKER["spec"], _WORKER["problem"], _WORKER["constants"], cell)


def all_cells(spec: ExperimentSpec):
    return [Cell(a, T, r) for a in range(len(spec.algorithms)) for T in sorted(spec.T_grid) for r in range(spec.seed_count)]


def summarize(spec: ExperimentSpec, results):
    """Per (algorithm, T): mean final squared error over finite replicates and its standard error."""
    groups: dict = {}
    for res in results:
        groups.setdefault((res.cell.alg_index, res.cell.T), []).append(res)
    rows = []
    for (a, T) in sorted(groups):
        vals = np.array([r.final_sq_error for r in groups[(a, T)]
                         if r.final_sq_error is not None and math.isfinite(r.final_sq_error)])
        k = vals.size
        mean = float(vals.mean()) if k else math.nan
        se = float(vals.std(ddof=1) / math.sqrt(k)) if k > 1 else (0.0 if k == 1 else math.nan)
        rows.append((a, spec.algorithms[a].label, T, mean, se, k))
    return rows


def fit_rates(spec: ExperimentSpec, summary_rows):
    rates = []
    for a, alg in enumerate(spec.algorithms):
        pts = [(T, m, se) for (ai, _, T, m, se, _) in summary_rows if ai == a and m > 0 and math.isfinite(m)]
        try:
            fit = estimate_rate(pts, seed=derive_seed(spec.master_seed, a))
            rates.append((alg.label, fit.exponent, fit.intercept, fit.r_squared, fit.ci_halfwidth, fit.n_points))
        except ValueError:
            rates.append((alg.label, math.nan, math.nan, math.nan, math.nan, len(pts)))
    return rates


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


@dataclass
class ExperimentResult:
    files: dict
    cells: list
    summary: list
    rates: list
    constants: ProblemConstants


def run_experiment(spec: ExperimentSpec, workers: int = 1, output_dir=None) -> ExperimentResult:
    """Execute every cell of ``spec`` and write runs.csv, summary.csv, rates.csv and optionally convergence.svg.

    Output bytes depend only on the experiment definition, never on ``workers``.
    """
    problem = spec.validate()
    D = spec.D or default_radius(problem)
    constants = problem_constants(problem, D)
    cells = all_cells(spec)

    for alg in spec.algorithms:
        for T in sorted(spec.T_grid):
            rule = step_size_for(alg, T, constants, problem.n)
            if rule is not None and not rule.satisfied:
                log.warning("%s at T=%d: precondition %s not met (%.4g <= %.4g)", alg.label, T,
                            rule.precondition, rule.precondition_value, rule.precondition_threshold)

    if workers > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker, initargs=(spec,)) as pool:
            results = list(pool.map(_worker_run, cells, chunksize=max(1, len(cells) // (4 * workers))))
    else:
        results = [run_cell(spec, problem, constants, c) for c in cells]
    results.sort(key=lambda r: (r.cell.alg_index, r.cell.T, r.cell.rep))

    summary = summarize(spec, results)
    rates = fit_rates(spec, summary)

    out = Path(output_dir if output_dir is not None else spec.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {}
    texts = {
        "runs.csv": _csv_text(RUNS_COLUMNS, [r.row() for r in results]),
        "summary.csv": _csv_text(SUMMARY_COLUMNS, [(lab, fmt(T), fmt(m), fmt(se), fmt(k)) for (_, lab, T, m, se, k) in summary]),
        "rates.csv": _csv_text(RATES_COLUMNS, [(lab, *(fmt(v) for v in rest[:-1]), fmt(rest[-1])) for lab, *rest in rates]),
    }
    if spec.plots:
        series = {}
        for (_, lab, T, m, _, _) in summary:
            series.setdefault(lab, []).append((T, m))
        texts["convergence.svg"] = loglog_svg(series, title=f"{spec.problem.family}, n={problem.n}",
                                              ylabel="mean ||x_T - x*||^2")
    for name, text in texts.items():
        path = out / name
        path.write_text(text, encoding="utf-8")
        files[name] = path
    return ExperimentResult(files, results, summary, rates, constants)
