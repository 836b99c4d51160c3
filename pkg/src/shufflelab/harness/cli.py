"""Command-line entry point."""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .. import analysis
from ..optimizers import Kind
from ..problems import make_lower_bound_instance, problem_constants
from ..ratefit import estimate_rate
from .config import SpecError, load_spec
from .runner import RATES_COLUMNS, default_radius, fmt, run_experiment, step_size_for


def _floats(text: str):
    return [float(v) for v in text.split(",") if v.strip()]


def _gamma_grid(text: str):
    """Comma list, or ``log:lo:hi:count`` for a geometric grid."""
    if text.startswith("log:"):
        lo, hi, k = text[4:].split(":")
        return np.geomspace(float(lo), float(hi), int(k)).tolist()
    return _floats(text)


def _write_csv(rows, header, dest):
    fh = open(dest, "w", newline="", encoding="utf-8") if dest else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    finally:
        if dest:
            fh.close()


def cmd_run(args) -> int:
    spec = load_spec(args.spec)
    result = run_experiment(spec, workers=args.workers, output_dir=args.out)
    for name, path in result.files.items():
        print(f"wrote {path}")
    failed = sum(1 for c in result.cells if c.error_message)
    if failed:
        print(f"{failed} of {len(result.cells)} cells reported an error", file=sys.stderr)
    for label, exponent, _, r2, ci, k in result.rates:
        print(f"{label}: exponent {exponent:.4f} +- {ci:.4f} (r^2 {r2:.4f}, {k} points)")
    return 0


def cmd_oracle_check(args) -> int:
    lam = _floats(args.eigenvalues)
    problem, inst = make_lower_bound_instance(lam, [1.0] * len(lam), args.n, [1.0] * len(lam))
    closed = analysis.closed_form_expected_error(inst, args.gamma, args.n).expected_sq_error
    mc = analysis.monte_carlo_sq_error(problem, args.gamma, np.ones(len(lam)), 1, args.samples, args.seed)
    brute = None
    if args.n <= 6:
        brute = analysis.brute_force_rs_expectation(problem, args.gamma, 1, np.ones(len(lam)))
    z = (mc.mean - closed) / mc.stderr if mc.stderr > 0 else 0.0
    rows = [("closed_form", fmt(closed), ""), ("monte_carlo", fmt(mc.mean), fmt(mc.stderr))]
    if brute is not None:
        rows.append(("brute_force", fmt(brute), ""))
    _write_csv(rows, ("oracle", "expected_sq_error", "stderr"), None)
    ok = abs(z) <= 4.0 and (brute is None or abs(brute - closed) <= 1e-10)
    print(f"# z = {z:.3f}; {'agree' if ok else 'DISAGREE'}", file=sys.stderr)
    return 0 if ok else 1


def cmd_recursion_check(args) -> int:
    spec = load_spec(args.spec)
    problem = spec.validate()
    D = spec.D or default_radius(problem)
    constants = problem_constants(problem, D)
    T = max(spec.T_grid)
    if args.gamma is not None:
        gamma = args.gamma
    else:
        shuffled = [a for a in spec.algorithms if a.kind is Kind.RANDOM_SHUFFLE] or list(spec.algorithms)
        alg = shuffled[0]
        rule = step_size_for(alg, T, constants, problem.n)
        gamma = rule.gamma if rule is not None else float(alg.step_rule)
    epochs = args.epochs or T // problem.n
    report = analysis.check_epoch_recursion(problem, gamma, epochs, args.samples, spec.master_seed, D)
    rows = [(fmt(r.epoch), fmt(r.start_sq_error), fmt(r.lhs), fmt(r.lhs_stderr), fmt(r.rhs), fmt(r.satisfied))
            for r in report.rows]
    _write_csv(rows, ("epoch", "start_sq_error", "lhs", "lhs_stderr", "rhs", "satisfied"), args.output)
    print(f"# gamma={gamma:.6g} C1={report.C1:.6g} C2={report.C2:.6g} C3={report.C3:.6g} "
          f"precondition {'met' if report.precondition_met else 'NOT met'} "
          f"({report.precondition_value:.4g} vs {report.precondition_threshold:.4g})", file=sys.stderr)
    return 0 if report.all_satisfied else 1


def cmd_lower_bound_sweep(args) -> int:
    lam = _floats(args.eigenvalues)
    _, inst = make_lower_bound_instance(lam, [1.0] * len(lam), args.n, [1.0] * len(lam))
    sweep = analysis.lower_bound_sweep(inst, _gamma_grid(args.gammas))
    _write_csv([(fmt(g), fmt(v)) for g, v in sweep.rows], ("gamma", "scaled_sq_error"), None)
    print(f"# T={sweep.T}: min T*E||x_T-x*||^2 = {sweep.min_scaled_error:.6g} at gamma = {sweep.best_gamma:.6g}",
          file=sys.stderr)
    return 0


def cmd_rate(args) -> int:
    curves: dict = {}
    with open(args.input, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            m = float(row["mean_sq_error"])
            if m > 0 and math.isfinite(m):
                curves.setdefault(row["algorithm"], []).append((int(row["T"]), m, float(row["stderr"])))
    rows = []
    for label, pts in curves.items():
        try:
            fit = estimate_rate(pts, bootstrap_reps=args.bootstrap, seed=args.seed)
            rows.append((label, fmt(fit.exponent), fmt(fit.intercept), fmt(fit.r_squared), fmt(fit.ci_halfwidth),
                         fmt(fit.n_points)))
        except ValueError as exc:
            print(f"# {label}: {exc}", file=sys.stderr)
    _write_csv(rows, RATES_COLUMNS, args.output)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="shufflelab", description="RandomShuffle vs SGD experiments")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="execute an experiment spec")
    r.add_argument("spec", type=Path)
    r.add_argument("--workers", type=int, default=1)
    r.add_argument("--out", type=Path, default=None, help="override outputs.dir")
    r.set_defaults(func=cmd_run)

    o = sub.add_parser("oracle-check", help="closed form vs Monte-Carlo vs enumeration on a lower-bound instance")
    o.add_argument("--n", type=int, required=True)
    o.add_argument("--gamma", type=float, required=True)
    o.add_argument("--samples", type=int, default=100000)
    o.add_argument("--seed", type=int, default=0)
    o.add_argument("--eigenvalues", default="1,2,3")
    o.set_defaults(func=cmd_oracle_check)

    c = sub.add_parser("recursion-check", help="per-epoch contraction inequality report")
    c.add_argument("spec", type=Path)
    c.add_argument("--samples", type=int, default=10000)
    c.add_argument("--epochs", type=int, default=None)
    c.add_argument("--gamma", type=float, default=None)
    c.add_argument("--output", type=Path, default=None)
    c.set_defaults(func=cmd_recursion_check)

    s = sub.add_parser("lower-bound-sweep", help="scaled one-epoch error over a step-size grid")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--gammas", required=True, help="comma list or log:lo:hi:count")
    s.add_argument("--eigenvalues", default="1,2,3")
    s.set_defaults(func=cmd_lower_bound_sweep)

    f = sub.add_parser("rate", help="fit exponents from a summary.csv")
    f.add_argument("--input", type=Path, required=True)
    f.add_argument("--output", type=Path, default=None)
    f.add_argument("--bootstrap", type=int, default=1000)
    f.add_argument("--seed", type=int, default=0)
    f.set_defaults(func=cmd_rate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (SpecError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
