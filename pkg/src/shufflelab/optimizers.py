"""SGD, RandomShuffle, IGD and GD on finite-sum problems."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .problems import FiniteSumProblem, ProblemConstants
from .rng import fisher_yates, make_generator


class Kind(str, enum.Enum):
    SGD = "SGD"
    RANDOM_SHUFFLE = "RANDOM_SHUFFLE"
    IGD = "IGD"
    GD = "GD"


@dataclass(frozen=True)
class OptimizerConfig:
    """One optimizer run.

    ``T`` counts component-gradient calls; a GD step is charged ``n`` calls.
    ``D`` is only used to flag iterates that leave the ball around the
    minimizer; nothing is projected.
    """

    kind: Kind
    gamma: float
    T: int
    seed: int = 0
    x0: Optional[np.ndarray] = None
    record_every: int = 1
    D: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))


@dataclass
class RunRecord:
    config: OptimizerConfig
    errors: np.ndarray  # rows of (k, ||x_k - x*||^2, F(x_k) - F*)
    epoch_endpoints: list
    epoch_residual_norms: list
    final_point: np.ndarray
    exited_ball: bool = False
    diverged_at: Optional[int] = None

    @property
    def seed(self) -> int:
        return self.config.seed

    @property
    def final_sq_error(self) -> float:
        return float(self.errors[-1, 1])

    @property
    def final_gap(self) -> float:
        return float(self.errors[-1, 2])


def _validate(problem: FiniteSumProblem, config: OptimizerConfig) -> None:
    if not config.gamma > 0:
        raise ValueError(f"step size must be positive, got {config.gamma}")
    if config.T < 0:
        raise ValueError("T must be non-negative")
    if config.record_every < 1:
        raise ValueError("record_every must be at least 1")
    if config.kind is Kind.RANDOM_SHUFFLE and config.T % problem.n:
        raise ValueError(f"RandomShuffle needs whole epochs: n={problem.n} does not divide T={config.T}")


def run_optimizer(problem: FiniteSumProblem, config: OptimizerConfig) -> RunRecord:
    """Run one algorithm for ``config.T`` gradient calls.

    SGD samples indices i.i.d. uniformly, RandomShuffle draws a fresh
    Fisher-Yates permutation each epoch, IGD always visits components in
    load order and GD takes a full-gradient step every ``n`` calls. The result
    is a pure function of ``(problem, config)``.
    """
    _validate(problem, config)
    # overflow is expected on divergent runs and is reported through diverged_at
    with np.errstate(over="ignore", invalid="ignore"):
        return _run(problem, config)


def _run(problem: FiniteSumProblem, config: OptimizerConfig) -> RunRecord:
    n, T, gamma = problem.n, config.T, float(config.gamma)
    x_star = problem.minimizer
    f_star = problem.optimal_value
    x = np.array(config.x0 if config.x0 is not None else np.ones(problem.d), dtype=float)
    if x.shape != (problem.d,):
        raise ValueError(f"x0 must have shape ({problem.d},)")
    radius_sq = math.inf if config.D is None else float(config.D) ** 2
    rng = make_generator(config.seed)
    grads = [c.gradient for c in problem.components]

    errors = []
    endpoints: list = []
    residuals: list = []

    def record(k, point):
        r = point - x_star
        errors.append((k, float(r @ r), float(problem.value(point)) - f_star))

    record(0, x)
    exited = False
    diverged_at = None

    if config.kind is Kind.GD:
        k = 0
        for _ in range(T // n):
            x = x - gamma * problem.gradient(x)
            k += n
            r = x - x_star
            dist_sq = float(r @ r)
            if not dist_sq < math.inf:
                diverged_at = k
                break
            exited |= dist_sq > radius_sq
            endpoints.append(x.copy())
            if k % config.record_every < n and k < T:
                record(k, x)
    else:
        if config.kind is Kind.SGD:
            order = rng.integers(0, n, size=T)
        elif config.kind is Kind.IGD:
            order = np.resize(np.arange(n), T)
        else:
            order = None
        used = np.zeros_like(x)
        epoch_start = x
        for k in range(1, T + 1):
            pos = (k - 1) % n
            if order is None:
                if pos == 0:
                    perm = fisher_yates(n, rng)
                    assert np.array_equal(np.sort(perm), np.arange(n)), "invalid permutation"
                    used = np.zeros_like(x)
                    epoch_start = x
                i = perm[pos]
            else:
                i = order[k - 1]
            g = grads[i](x)
            if order is None:
                used = used + g
            x = x - gamma * g
            r = x - x_star
            dist_sq = float(r @ r)
            if not dist_sq < math.inf:
                diverged_at = k
                break
            if dist_sq > radius_sq:
                exited = True
            if pos == n - 1:
                endpoints.append(x.copy())
                if order is None:
                    residuals.append(float(np.linalg.norm(used - problem.gradient_sum(epoch_start))))
            if k % config.record_every == 0 and k < T:
                record(k, x)

    if diverged_at is not None:
        errors.append((diverged_at, math.nan, math.nan))
    else:
        record(T, x)
    return RunRecord(
        config=config,
        errors=np.array(errors, dtype=float),
        epoch_endpoints=endpoints,
        epoch_residual_norms=residuals,
        final_point=x,
        exited_ball=exited,
        diverged_at=diverged_at,
    )


# ----------------------------------------------------------------------
# step sizes


THEOREMS = ("THM1", "THM2", "THM4", "THM5", "THM6", "SGD_PL")


@dataclass(frozen=True)
class StepSize:
    theorem: str
    gamma: float
    precondition: str
    precondition_value: float
    precondition_threshold: float
    satisfied: bool
    active_term: str = ""


def theorem_step_size(theorem: str, T: int, constants: ProblemConstants, n: int, D: Optional[float] = None) -> StepSize:
    """Step size prescribed by a convergence theorem, with its epoch-count precondition.

    ``SGD_PL`` is the with-replacement schedule ``log T / (mu T)`` used for SGD
    under the PL condition. Logarithms are natural.
    """
    theorem = theorem.upper()
    if theorem not in THEOREMS:
        raise ValueError(f"unknown theorem {theorem!r}; expected one of {THEOREMS}")
    if T < 2:
        raise ValueError("T must be at least 2 so that log T > 0")
    c = constants
    D = c.D if D is None else float(D)
    logT = math.log(T)
    ratio = T / logT
    kappa = c.L / c.mu

    if theorem == "THM1":
        thr = 6.0 * (1.0 + kappa) * n
        return StepSize(theorem, 4.0 * logT / (T * c.mu), "T/log T > 6(1+kappa)n", ratio, thr, ratio > thr)
    if theorem in ("THM2", "THM4"):
        C = max(32.0 / c.mu**2 * (c.L_H * c.L * D + 3.0 * c.L_H * c.G), 12.0 * (1.0 + kappa))
        thr = C * n
        return StepSize(theorem, 8.0 * logT / (T * c.mu), "T/log T > C n", ratio, thr, ratio > thr)
    if theorem == "THM5":
        thr = 16.0 * kappa**2 * n
        return StepSize(theorem, 2.0 * logT / (T * c.mu), "T/log T > 16 kappa^2 n", ratio, thr, ratio > thr)
    if theorem == "SGD_PL":
        return StepSize(theorem, logT / (T * c.mu), "none", ratio, 0.0, True)

    # THM6: four-way minimum, with ||Delta|| replaced by its bound L G / (n - 1)
    delta_norm = c.L * c.G / (n - 1) if n > 1 else 0.0
    noise = delta_norm + c.L_H * c.L * D**2 + 2.0 * c.L_H * D * c.G
    terms = {
        "1/(16nL)": 1.0 / (16.0 * n * c.L),
        "sqrt(D/(Tn(...)))": math.sqrt(D / (T * n * noise)) if noise > 0 else math.inf,
        "(D/(Tn^2L^2delta))^(1/3)": (D / (T * n**2 * c.L**2 * c.delta)) ** (1.0 / 3.0) if c.delta > 0 else math.inf,
        "(1/(Tn^3L^4))^(1/4)": (1.0 / (T * n**3 * c.L**4)) ** 0.25,
    }
    active = min(terms, key=terms.get)
    return StepSize(theorem, terms[active], "none", ratio, 0.0, True, active)


def residual_bound(n: int, gamma: float, constants: ProblemConstants) -> float:
    """Worst-case size of the epoch gradient error: ``n(n-1)/2 * gamma * G * L``."""
    return 0.5 * n * (n - 1) * gamma * constants.G * constants.L
