"""Exact oracles and inequality checks for RandomShuffle on finite sums."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .optimizers import Kind, OptimizerConfig, RunRecord, run_optimizer
from .problems import FiniteSumProblem, LowerBoundInstance, ProblemConstants, problem_constants
from .rng import derive_seed, make_generator

BRUTE_FORCE_BUDGET = 10**6


# ----------------------------------------------------------------------
# closed form on the lower-bound instance


@dataclass(frozen=True)
class ClosedFormResult:
    mean_iterate: np.ndarray
    expected_sq_error: float
    per_coordinate_terms: tuple  # (bias, variance) per eigen-coordinate


def shuffle_variance_factor(step: float, T: int) -> float:
    """``E[(sum_t s_t r^(T-t))^2]`` for a balanced random +-1 sequence, ``r = 1 - step``.

    ``step`` is ``gamma * lambda``; the value at ``step = 0`` is never needed
    because the variance term carries a factor ``step^2``.
    """
    r = 1.0 - step
    geo2 = (1.0 - r ** (2 * T)) / (1.0 - r * r)
    geo1 = (1.0 - r**T) / step
    return T / (T - 1) * geo2 - geo1 * geo1 / (T - 1)


def closed_form_expected_error(instance: LowerBoundInstance, gamma: float, T: int) -> ClosedFormResult:
    """Exact ``E||x_T - x*||^2`` after one RandomShuffle epoch on the lower-bound instance."""
    if T != instance.n:
        raise ValueError(f"closed form covers exactly one epoch: T must equal n={instance.n}")
    if gamma < 0:
        raise ValueError("step size must be non-negative")
    lam = np.asarray(instance.eigenvalues)
    a = np.asarray(instance.a_coeffs)
    b = np.asarray(instance.b_coeffs)
    if np.any(gamma * lam >= 2.0):
        raise ValueError(f"gamma * lambda_max = {gamma * lam.max():g} >= 2: the iteration diverges")
    terms = []
    for lam_i, a_i, b_i in zip(lam, a, b):
        step = gamma * lam_i
        bias = (1.0 - step) ** (2 * T) * a_i**2
        variance = 0.0 if step == 0.0 else gamma**2 * b_i**2 * lam_i**2 * shuffle_variance_factor(step, T)
        terms.append((float(bias), float(variance)))
    mean_iterate = (1.0 - gamma * lam) ** T * a
    total = math.fsum(bi + vi for bi, vi in terms)
    return ClosedFormResult(mean_iterate, total, tuple(terms))


def permutation_sign_correlation(n: int) -> np.ndarray:
    """Matrix of ``E[s_t s_u]`` with ``s_t = (-1)^sigma(t)``, by enumerating every permutation."""
    if n < 2 or n % 2:
        raise ValueError("n must be a positive even number")
    acc = np.zeros((n, n))
    count = 0
    for perm in itertools.permutations(range(1, n + 1)):
        s = np.where(np.array(perm) % 2 == 1, -1.0, 1.0)
        acc += np.outer(s, s)
        count += 1
    return acc / count


# ----------------------------------------------------------------------
# enumeration and sampling oracles


def _apply_order(problem: FiniteSumProblem, X: np.ndarray, orders: np.ndarray, gamma: float) -> np.ndarray:
    """Advance each row of ``X`` through its own sequence of component indices."""
    for k in range(orders.shape[1]):
        X = X - gamma * problem.gradients_by_index(orders[:, k], X)
    return X


def brute_force_rs_expectation(problem: FiniteSumProblem, gamma: float, epochs: int, x0) -> float:
    """Exact average of ``||x_T - x*||^2`` over all ``(n!)^epochs`` permutation sequences."""
    n = problem.n
    if n > 6 or epochs < 1 or epochs > 3 or math.factorial(n) ** epochs > BRUTE_FORCE_BUDGET:
        raise ValueError(f"enumeration of (n!)^l = ({n}!)^{epochs} sequences exceeds the budget")
    perms = np.array(list(itertools.permutations(range(n))))
    X = np.asarray(x0, dtype=float).reshape(1, -1)
    for _ in range(epochs):
        # every current point continues with every permutation
        X = np.repeat(X, len(perms), axis=0)
        orders = np.tile(perms, (X.shape[0] // len(perms), 1))
        X = _apply_order(problem, X, orders, gamma)
    r = X - problem.minimizer
    return math.fsum(np.einsum("ij,ij->i", r, r)) / X.shape[0]


def simulate_batch(
    problem: FiniteSumProblem,
    gamma: float,
    x0,
    epochs: int,
    samples: int,
    rng: np.random.Generator,
    kind: Kind = Kind.RANDOM_SHUFFLE,
) -> np.ndarray:
    """Final points of ``samples`` independent runs of ``epochs * n`` steps each."""
    n = problem.n
    X = np.tile(np.asarray(x0, dtype=float), (samples, 1))
    for _ in range(epochs):
        if Kind(kind) is Kind.SGD:
            orders = rng.integers(0, n, size=(samples, n))
        else:
            orders = rng.permuted(np.tile(np.arange(n), (samples, 1)), axis=1)
        X = _apply_order(problem, X, orders, gamma)
    return X


@dataclass(frozen=True)
class MonteCarloEstimate:
    mean: float
    stderr: float
    samples: int


def monte_carlo_sq_error(
    problem: FiniteSumProblem, gamma: float, x0, epochs: int, samples: int, seed: int, kind: Kind = Kind.RANDOM_SHUFFLE
) -> MonteCarloEstimate:
    X = simulate_batch(problem, gamma, x0, epochs, samples, make_generator(seed), kind)
    r = X - problem.minimizer
    e = np.einsum("ij,ij->i", r, r)
    se = float(e.std(ddof=1) / math.sqrt(samples)) if samples > 1 else math.inf
    return MonteCarloEstimate(float(e.mean()), se, samples)


# ----------------------------------------------------------------------
# second-order interaction


@dataclass(frozen=True)
class DeltaResult:
    vector: np.ndarray
    norm: float
    bound: float
    identity_vector: np.ndarray


def compute_delta(problem: FiniteSumProblem, constants: Optional[ProblemConstants] = None, D: float = 1.0) -> DeltaResult:
    """Average of ``H_i(x*) grad f_j(x*)`` over ordered pairs ``i != j``.

    Also returns ``-(1/(n-1)) E_i[H_i grad f_i]`` which must agree with the pair
    average because the component gradients sum to zero at the minimizer, and
    the bound ``L G / (n - 1)``.
    """
    n = problem.n
    if n < 2:
        raise ValueError("need at least two components")
    if constants is None:
        constants = problem_constants(problem, D)
    x_star = problem.minimizer
    H = [c.hessian(x_star) for c in problem.components]
    g = [c.gradient(x_star) for c in problem.components]
    acc = np.zeros(problem.d)
    for i in range(n):
        for j in range(n):
            if i != j:
                acc += H[i] @ g[j]
    delta = acc / (n * (n - 1))
    identity = -sum(Hi @ gi for Hi, gi in zip(H, g)) / (n * (n - 1))
    return DeltaResult(delta, float(np.linalg.norm(delta)), constants.L * constants.G / (n - 1), identity)


# ----------------------------------------------------------------------
# epoch recursion


@dataclass(frozen=True)
class RecursionRow:
    epoch: int
    start_sq_error: float
    lhs: float
    lhs_stderr: float
    rhs: float
    satisfied: bool


@dataclass(frozen=True)
class RecursionReport:
    rows: tuple
    C1: float
    C2: float
    C3: float
    gamma: float
    precondition_value: float
    precondition_threshold: float
    precondition_met: bool

    @property
    def all_satisfied(self) -> bool:
        return all(r.satisfied for r in self.rows)


def recursion_constants(c: ProblemConstants) -> tuple:
    """Quadratic-case constants ``(C1, C2, C3)`` of the one-epoch recursion."""
    return (
        2.0 / c.mu * c.L**2 * c.G**2,
        2.0 / c.mu * c.L**4 * c.G**2,
        0.5 * c.G**2 * c.L**2,
    )


def check_epoch_recursion(
    problem: FiniteSumProblem,
    gamma: float,
    epochs: int,
    samples: int,
    seed: int,
    D: float,
    x0=None,
    n_sigma: float = 3.0,
) -> RecursionReport:
    """Check the one-epoch contraction inequality along a reference trajectory.

    For each epoch start ``x^t_0`` of a seeded RandomShuffle run the expected
    squared error after one more epoch is estimated from ``samples`` fresh
    epochs and compared against

        (1 - n gamma L mu / (L + mu)) ||x^t_0 - x*||^2
            + gamma^3 n C1 + gamma^5 n^5 C2 + gamma^4 n^4 C3.

    An epoch fails only if the estimate exceeds the bound by more than
    ``n_sigma`` standard errors.
    """
    if not problem.constant_hessian:
        raise ValueError("the recursion constants are the quadratic-case ones")
    if samples < 100:
        raise ValueError("need at least 100 Monte-Carlo samples")
    if epochs < 1:
        raise ValueError("need at least one epoch")
    n = problem.n
    c = problem_constants(problem, D)
    C1, C2, C3 = recursion_constants(c)
    T = epochs * n
    precond_value = T / math.log(T) if T > 1 else 0.0
    precond_thr = 6.0 * (1.0 + c.kappa) * n
    contraction = 1.0 - n * gamma * c.L * c.mu / (c.L + c.mu)
    noise = gamma**3 * n * C1 + gamma**5 * n**5 * C2 + gamma**4 * n**4 * C3

    x0 = np.ones(problem.d) if x0 is None else np.asarray(x0, dtype=float)
    if gamma > 0:
        ref = run_optimizer(problem, OptimizerConfig(Kind.RANDOM_SHUFFLE, gamma, T, seed=seed, x0=x0))
        starts = [x0] + ref.epoch_endpoints[:-1]
    else:
        starts = [x0] * epochs

    rows = []
    for t, start in enumerate(starts):
        r0 = start - problem.minimizer
        d0 = float(r0 @ r0)
        est = monte_carlo_sq_error(problem, gamma, start, 1, samples, derive_seed(seed, 1, t))
        rhs = contraction * d0 + noise
        # relative slack of a few ulps keeps the gamma = 0 equality case from failing on rounding
        ok = est.mean - n_sigma * est.stderr <= rhs * (1.0 + 1e-12)
        rows.append(RecursionRow(t, d0, est.mean, est.stderr, rhs, bool(ok)))
    return RecursionReport(tuple(rows), C1, C2, C3, gamma, precond_value, precond_thr, precond_value > precond_thr)


# ----------------------------------------------------------------------
# vanishing variance


@dataclass(frozen=True)
class VanishingVarianceErrors:
    rs_error: Optional[float]
    sgd_error: float


def exact_vanishing_variance_errors(mu_list: Sequence[float], gamma: float, T: int, x0_dist: float) -> VanishingVarianceErrors:
    """Exact expected squared errors of RandomShuffle and SGD on ``f_i = (mu_i/2)||x - x*||^2``.

    Each step multiplies the squared error by ``(1 - gamma mu_i)^2``. SGD averages
    that factor per step, RandomShuffle multiplies all ``n`` factors once per
    epoch. The RandomShuffle value is ``None`` when ``n`` does not divide ``T``.
    """
    mu = np.asarray(mu_list, dtype=float)
    n = mu.size
    if n < 1 or np.any(mu <= 0):
        raise ValueError("mu_i must be positive")
    if gamma < 0 or gamma > 1.0 / mu.max():
        raise ValueError(f"gamma must lie in [0, 1/max(mu)] = [0, {1.0 / mu.max():g}]")
    if T < 0:
        raise ValueError("T must be non-negative")
    factors = (1.0 - gamma * mu) ** 2
    if np.all(factors == factors[0]):
        # identical factors: avoid the rounding of a sum or product of equal terms
        f =float(factors[0])
        sgd = f**T * x0_dist
        rs = f**T * x0_dist if T % n == 0 else None
        return VanishingVarianceErrors(rs, sgd)
    sgd = float(np.mean(factors)) ** T * x0_dist
    rs = None
    if T % n == 0:
        rs = float(np.prod(factors)) ** (T // n) * x0_dist
    return VanishingVarianceErrors(rs, sgd)


# ----------------------------------------------------------------------
# epoch averages and the lower-bound sweep


@dataclass(frozen=True)
class CesaroGap:
    gap: float
    raw_gap: float
    x_bar: np.ndarray


def cesaro_gap(problem: FiniteSumProblem, record: RunRecord) -> CesaroGap:
    """Suboptimality of the average of the epoch endpoints (the start point excluded)."""
    if not record.epoch_endpoints:
        raise ValueError("record has no epoch endpoints")
    x_bar = np.mean(np.stack(record.epoch_endpoints), axis=0)
    raw = float(problem.value(x_bar)) - problem.optimal_value
    return CesaroGap(max(raw, 0.0), raw, x_bar)


@dataclass(frozen=True)
class LowerBoundSweep:
    T: int
    rows: tuple  # (gamma, T * E||x_T - x*||^2)
    best_gamma: float
    min_scaled_error: float


def lower_bound_sweep(instance: LowerBoundInstance, gamma_grid: Sequence[float]) -> LowerBoundSweep:
    """Scaled one-epoch error ``T * E||x_T - x*||^2`` over a grid of constant step sizes."""
    if len(set(instance.eigenvalues)) < 3:
        raise ValueError("need at least three distinct eigenvalues")
    lam_max = max(instance.eigenvalues)
    grid = [float(g) for g in gamma_grid]
    if not grid:
        raise ValueError("empty step-size grid")
    bad = [g for g in grid if g < 0 or g * lam_max >= 2.0]
    if bad:
        raise ValueError(f"step sizes {bad[:3]} violate 0 <= gamma * lambda_max < 2")
    T = instance.n
    rows = tuple((g, T * closed_form_expected_error(instance, g, T).expected_sq_error) for g in grid)
    best = min(rows, key=lambda r: r[1])
    return LowerBoundSweep(T, rows, best[0], best[1])
