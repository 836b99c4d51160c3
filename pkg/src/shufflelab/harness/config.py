"""Experiment definitions read from TOML files.

Grammar (every key is listed; anything else is rejected)::

    T_grid = [512, 1024, 2048]       # gradient-call budgets
    record_every = 1                 # optional, default: final point only

    [problem]
    family = "quadratic"             # quadratic | lower_bound | sparse | pl | vanishing_variance
    n = 16
    d = 4
    spectrum = [1.0, 5.0]            # [lo, hi]; eigenvalue list for lower_bound
    groups = [1, 1]                  # sparse: component count per coordinate block
    mu_list = [1.0, 3.0]             # vanishing_variance
    b_coeffs = [1.0, 1.0]            # lower_bound shift, or pl slopes
    seed = 7

    [domain]
    D = 2.0                          # optional; default max(||x0 - x*||, 1)

    [[algorithms]]
    kind = "RANDOM_SHUFFLE"          # SGD | RANDOM_SHUFFLE | IGD | GD
    step_rule = "THM1"               # a number, or THM1 | THM2 | THM4 | THM5 | THM6 | SGD_PL

    [seeds]
    count = 32
    master = 1

    [outputs]
    dir = "out"
    plots = true

Every run starts from ``x0 = (1, ..., 1)``.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from ..optimizers import THEOREMS, Kind
from ..problems import (
    FAMILIES,
    FiniteSumProblem,
    make_lower_bound_instance,
    make_pl_problem,
    make_quadratic,
    make_sparse_problem,
    make_vanishing_variance_problem,
)

TOP_KEYS = {"problem", "domain", "algorithms", "T_grid", "seeds", "record_every", "outputs"}
PROBLEM_KEYS = {"family", "n", "d", "spectrum", "groups", "mu_list", "b_coeffs", "seed"}
SECTION_KEYS = {
    "domain": {"D"},
    "seeds": {"count", "master"},
    "outputs": {"dir", "plots"},
}
ALGORITHM_KEYS = {"kind", "step_rule"}


class SpecError(ValueError):
    pass


@dataclass(frozen=True)
class ProblemSpec:
    family: str
    n: Optional[int] = None
    d: Optional[int] = None
    spectrum: Optional[tuple] = None
    groups: Optional[tuple] = None
    mu_list: Optional[tuple] = None
    b_coeffs: Optional[tuple] = None
    seed: int = 0

    def build(self) -> FiniteSumProblem:
        f = self.family
        if f == "quadratic":
            lo, hi = self._range()
            return make_quadratic(self._need("n"), self._need("d"), (lo, hi), self.seed)
        if f == "sparse":
            lo, hi = self._range()
            return make_sparse_problem(self._need("n"), self._need("d"), list(self._need("groups")), (lo, hi), self.seed)
        if f == "lower_bound":
            lam = list(self._need("spectrum"))
            b = list(self.b_coeffs) if self.b_coeffs is not None else [1.0] * len(lam)
            problem, _ = make_lower_bound_instance(lam, b, self._need("n"), [1.0] * len(lam))
            return problem
        if f == "pl":
            b = self.b_coeffs
            if b is None:
                b = tuple(np.linspace(-1.0, 1.0, self._need("n")).tolist())
            return make_pl_problem(b)
        mus = list(self._need("mu_list"))
        return make_vanishing_variance_problem(mus, self.d or 1, 0.0)

    def _need(self, key):
        value = getattr(self, key)
        if value is None:
            raise SpecError(f"problem.{key} is required for family {self.family!r}")
        return value

    def _range(self):
        spec = self._need("spectrum")
        if len(spec) != 2:
            raise SpecError("problem.spectrum must be [lo, hi] for this family")
        return float(spec[0]), float(spec[1])


@dataclass(frozen=True)
class AlgorithmSpec:
    kind: Kind
    step_rule: Union[str, float]

    @property
    def label(self) -> str:
        rule = self.step_rule if isinstance(self.step_rule, str) else format(self.step_rule, ".17g")
        return f"{self.kind.value}/{rule}"


@dataclass(frozen=True)
class ExperimentSpec:
    problem: ProblemSpec
    algorithms: tuple
    T_grid: tuple
    seed_count: int = 1
    master_seed: int = 0
    D: Optional[float] = None
    record_every: Optional[int] = None
    output_dir: str = "out"
    plots: bool = False

    def validate(self, problem: Optional[FiniteSumProblem] = None) -> FiniteSumProblem:
        """Check the experiment against its built problem and return the problem."""
        if not self.algorithms:
            raise SpecError("at least one algorithm is required")
        if not self.T_grid:
            raise SpecError("T_grid must not be empty")
        if len(set(self.T_grid)) != len(self.T_grid) or any(t < 1 for t in self.T_grid):
            raise SpecError("T_grid values must be distinct positive integers")
        if self.seed_count < 1:
            raise SpecError("seeds.count must be at least 1")
        labels = [a.label for a in self.algorithms]
        if len(set(labels)) != len(labels):
            raise SpecError("duplicate algorithm entries")
        if self.D is not None and not self.D > 0:
            raise SpecError("domain.D must be positive")
        if self.record_every is not None and self.record_every < 1:
            raise SpecError("record_every must be at least 1")
        problem = problem if problem is not None else self.problem.build()
        n = problem.n
        for alg in self.algorithms:
            if alg.kind in (Kind.RANDOM_SHUFFLE, Kind.IGD):
                bad = [t for t in self.T_grid if t % n]
                if bad:
                    raise SpecError(f"{alg.label}: T values {bad} are not multiples of n={n}")
            if isinstance(alg.step_rule, str) and min(self.T_grid) < 2:
                raise SpecError("theorem step sizes need T >= 2")
        return problem


def _check_keys(table: dict, allowed: set, where: str) -> None:
    extra = set(table) - allowed
    if extra:
        raise SpecError(f"unknown keys in {where}: {sorted(extra)}")


def _step_rule(value) -> Union[str, float]:
    if isinstance(value, bool):
        raise SpecError("step_rule must be a number or a theorem id")
    if isinstance(value, (int, float)):
        if not value > 0:
            raise SpecError("explicit step size must be positive")
        return float(value)
    rule = str(value).upper()
    if rule not in THEOREMS:
        raise SpecError(f"unknown step rule {value!r}; expected a number or one of {THEOREMS}")
    return rule


def _tuple(value, cast=float):
    return None if value is None else tuple(cast(v) for v in value)


def spec_from_dict(raw: dict) -> ExperimentSpec:
    _check_keys(raw, TOP_KEYS, "top level")
    for section, keys in SECTION_KEYS.items():
        _check_keys(raw.get(section, {}), keys, section)
    prob = raw.get("problem")
    if not isinstance(prob, dict):
        raise SpecError("a [problem] table is required")
    _check_keys(prob, PROBLEM_KEYS, "problem")
    family = prob.get("family")
    if family not in FAMILIES:
        raise SpecError(f"problem.family must be one of {FAMILIES}")
    problem = ProblemSpec(
        family=family,
        n=prob.get("n"),
        d=prob.get("d"),
        spectrum=_tuple(prob.get("spectrum")),
        groups=_tuple(prob.get("groups"), int),
        mu_list=_tuple(prob.get("mu_list")),
        b_coeffs=_tuple(prob.get("b_coeffs")),
        seed=int(prob.get("seed", 0)),
    )

    algorithms = []
    for i, entry in enumerate(raw.get("algorithms", [])):
        _check_keys(entry, ALGORITHM_KEYS, f"algorithms[{i}]")
        try:
            kind = Kind(str(entry["kind"]).upper())
        except (KeyError, ValueError):
            raise SpecError(f"algorithms[{i}].kind must be one of {[k.value for k in Kind]}") from None
        if "step_rule" not in entry:
            raise SpecError(f"algorithms[{i}].step_rule is required")
        algorithms.append(AlgorithmSpec(kind, _step_rule(entry["step_rule"])))

    seeds = raw.get("seeds", {})
    outputs = raw.get("outputs", {})
    D = raw.get("domain", {}).get("D")
    return ExperimentSpec(
        problem=problem,
        algorithms=tuple(algorithms),
        T_grid=tuple(int(t) for t in raw.get("T_grid", [])),
        seed_count=int(seeds.get("count", 1)),
        master_seed=int(seeds.get("master", 0)),
        D=None if D is None else float(D),
        record_every=raw.get("record_every"),
        output_dir=str(outputs.get("dir", "out")),
        plots=bool(outputs.get("plots", False)),
    )


def load_spec(path) -> ExperimentSpec:
    path = Path(path)
    with path.open("rb") as fh:
        try:
            raw = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise SpecError(f"{path}: {exc}") from None
    spec = spec_from_dict(raw)
    out = Path(spec.output_dir)
    if not out.is_absolute():
        # relative output directories are resolved against the config file location
        spec = ExperimentSpec(**{**spec.__dict__, "output_dir": str(path.parent / out)})
    return spec
