"""Finite-sum test problems with exact oracles.

A :class:`FiniteSumProblem` is the average ``F(x) = (1/n) sum_i f_i(x)`` of
``n`` components. Components evaluate on arrays whose last axis is the
dimension ``d``, so the same objects serve single trajectories and batches of
Monte-Carlo replicates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from .rng import make_generator

FAMILIES = ("quadratic", "lower_bound", "sparse", "pl", "vanishing_variance")

# certified constants of the sine-perturbed PL instance
PL_MU = 1.0 / 32.0
PL_SMOOTHNESS = 8.0
PL_HESSIAN_LIPSCHITZ = 12.0


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class QuadraticComponent:
    """``f(x) = 1/2 x'Ax + b'x + c``, optionally acting on a coordinate subset.

    With ``support`` set, ``A`` and ``b`` are given in the coordinates of the
    support only and the function ignores every other coordinate.
    """

    A: np.ndarray
    b: np.ndarray
    c: float = 0.0
    support: Optional[np.ndarray] = None
    d: int = 0

    def __post_init__(self):
        object.__setattr__(self, "A", _frozen(self.A))
        object.__setattr__(self, "b", _frozen(self.b))
        index = None
        if self.support is not None:
            s = np.array(self.support, dtype=int)
            s.setflags(write=False)
            object.__setattr__(self, "support", s)
            # contiguous blocks are read through a slice view
            contiguous = s.size > 0 and np.array_equal(s, np.arange(s[0], s[0] + s.size))
            index = slice(int(s[0]), int(s[0]) + s.size) if contiguous else s
        object.__setattr__(self, "_index", index)
        if not self.d:
            object.__setattr__(self, "d", self.A.shape[0])

    def _restrict(self, x):
        x = np.asarray(x, dtype=float)
        return x if self._index is None else x[..., self._index]

    def value(self, x):
        z = self._restrict(x)
        return 0.5 * np.einsum("...i,ij,...j->...", z, self.A, z) + z @ self.b + self.c

    def gradient(self, x):
        z = self._restrict(x)
        g = z @ self.A + self.b
        if self.support is None:
            return g
        out = np.zeros(np.shape(x), dtype=float)
        out[..., self._index] = g
        return out

    def hessian(self, x=None):
        if self.support is None:
            return np.array(self.A)
        H = np.zeros((self.d, self.d))
        H[np.ix_(self.support, self.support)] = self.A
        return H


@dataclass(frozen=True, eq=False)
class SinePLComponent:
    """One-dimensional ``f(x) = x^2 + 3 sin^2(x) + slope * x``."""

    slope: float

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return np.sum(x**2 + 3.0 * np.sin(x) ** 2 + self.slope * x, axis=-1)

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        return 2.0 * x + 3.0 * np.sin(2.0 * x) + self.slope

    def hessian(self, x):
        x = np.asarray(x, dtype=float).reshape(-1)
        return np.diag(2.0 + 6.0 * np.cos(2.0 * x))


@dataclass(frozen=True, eq=False)
class IsotropicComponent:
    """``f(x) = (mu/2) ||x - center||^2``."""

    mu: float
    center: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "center", _frozen(self.center))

    def value(self, x):
        r = np.asarray(x, dtype=float) - self.center
        return 0.5 * self.mu * np.sum(r * r, axis=-1)

    def gradient(self, x):
        return self.mu * (np.asarray(x, dtype=float) - self.center)

    def hessian(self, x=None):
        return self.mu * np.eye(self.center.shape[0])


Component = Union[QuadraticComponent, SinePLComponent, IsotropicComponent]


@dataclass(frozen=True, eq=False)
class FiniteSumProblem:
    components: tuple
    minimizer: np.ndarray
    family: str
    minimizer_exact: bool = True
    support_sets: Optional[tuple] = None
    analytic: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        object.__setattr__(self, "components", tuple(self.components))
        object.__setattr__(self, "minimizer", _frozen(self.minimizer))
        dense = all(isinstance(c, QuadraticComponent) and c.support is None for c in self.components)
        if dense:
            object.__setattr__(self, "_A", np.stack([c.A for c in self.components]))
            object.__setattr__(self, "_b", np.stack([c.b for c in self.components]))
        else:
            object.__setattr__(self, "_A", None)
            object.__setattr__(self, "_b", None)
        if all(isinstance(c, QuadraticComponent) for c in self.components):
            # the summed gradient of quadratics is itself affine
            d = self.minimizer.shape[0]
            object.__setattr__(self, "_H_sum", sum(c.hessian() for c in self.components))
            object.__setattr__(self, "_g0_sum", sum(c.gradient(np.zeros(d)) for c in self.components))
        else:
            object.__setattr__(self, "_H_sum", None)

    @property
    def n(self) -> int:
        return len(self.components)

    @property
    def d(self) -> int:
        return self.minimizer.shape[0]

    @property
    def constant_hessian(self) -> bool:
        return self.family != "pl"

    def value(self, x):
        return sum(c.value(x) for c in self.components) / self.n

    def gradient_sum(self, x):
        if self._H_sum is not None:
            return np.asarray(x, dtype=float) @ self._H_sum + self._g0_sum
        return sum(c.gradient(x) for c in self.components)

    def gradient(self, x):
        return self.gradient_sum(x) / self.n

    def hessian(self, x):
        return sum(c.hessian(x) for c in self.components) / self.n

    def component_gradient(self, i: int, x):
        return self.components[i].gradient(x)

    @property
    def optimal_value(self) -> float:
        return float(self.value(self.minimizer))

    def gradients_by_index(self, idx, X):
        """Row-wise gradients: row ``s`` of the result is ``grad f_{idx[s]}(X[s])``."""
        idx = np.asarray(idx)
        X = np.asarray(X, dtype=float)
        if self._A is not None:
            return np.einsum("sj,sjk->sk", X, self._A[idx]) + self._b[idx]
        out = np.empty_like(X)
        for i in np.unique(idx):
            mask = idx == i
            out[mask] = self.components[i].gradient(X[mask])
        return out


# ----------------------------------------------------------------------
# constructors


def _random_psd(rng: np.random.Generator, d: int, lo: float, hi: float) -> np.ndarray:
    Q, R = np.linalg.qr(rng.standard_normal((d, d)))
    Q = Q * np.sign(np.diag(R))
    ev = rng.uniform(lo, hi, size=d)
    A = (Q * ev) @ Q.T
    return 0.5 * (A + A.T)


def _check_spectrum(spectrum_range) -> tuple:
    lo, hi = (float(v) for v in spectrum_range)
    if not lo > 0:
        raise ValueError(f"spectrum lower end must be positive, got {lo}")
    if hi < lo:
        raise ValueError(f"spectrum range is empty: [{lo}, {hi}]")
    return lo, hi


def _solve_minimizer(components: Sequence[QuadraticComponent], d: int) -> np.ndarray:
    H = sum(c.hessian() for c in components)
    g0 = sum(c.gradient(np.zeros(d)) for c in components)
    if np.linalg.eigvalsh(H / len(components))[0] <= 0:
        raise ValueError("average Hessian is singular")
    x = np.linalg.solve(H, -g0)
    # one round of iterative refinement
    x = x - np.linalg.solve(H, sum(c.gradient(x) for c in components))
    return x


def quadratic_from_matrices(matrices, linear_terms, family: str = "quadratic") -> FiniteSumProblem:
    """Quadratic problem from explicit ``A_i`` and ``b_i``."""
    As = [np.atleast_2d(np.asarray(A, dtype=float)) for A in matrices]
    bs = [np.atleast_1d(np.asarray(b, dtype=float)) for b in linear_terms]
    if len(As) != len(bs) or not As:
        raise ValueError("need the same positive number of matrices and linear terms")
    comps = tuple(QuadraticComponent(A, b) for A, b in zip(As, bs))
    d = comps[0].d
    return FiniteSumProblem(comps, _solve_minimizer(comps, d), family)


def make_quadratic(n: int, d: int, spectrum_range, seed: int) -> FiniteSumProblem:
    """Random strongly convex quadratic ``f_i(x) = 1/2 x'A_i x + b_i'x``.

    Each ``A_i`` is ``Q diag(lambda) Q'`` with ``Q`` from the QR factorization
    of a Gaussian matrix and ``lambda`` uniform on ``spectrum_range``; ``b_i``
    is standard normal. Identical arguments give bit-identical problems.
    """
    if n < 1 or d < 1:
        raise ValueError("n and d must be positive")
    lo, hi = _check_spectrum(spectrum_range)
    rng = make_generator(seed)
    As, bs = [], []
    for _ in range(n):
        As.append(_random_psd(rng, d, lo, hi))
        bs.append(rng.standard_normal(d))
    return quadratic_from_matrices(As, bs)


@dataclass(frozen=True)
class LowerBoundInstance:
    """Shared-Hessian instance ``f_i = 1/2 (x -+ b)'A(x -+ b)`` in the eigenbasis of ``A``."""

    eigenvalues: tuple
    b_coeffs: tuple
    n: int
    a_coeffs: tuple

    @property
    def d(self) -> int:
        return len(self.eigenvalues)


def make_lower_bound_instance(eigenvalues, b_coeffs, n: int, x0_coeffs):
    lam = np.asarray(eigenvalues, dtype=float)
    b = np.asarray(b_coeffs, dtype=float)
    a = np.asarray(x0_coeffs, dtype=float)
    if n < 2 or n % 2:
        raise ValueError(f"n must be a positive even number, got {n}")
    if lam.ndim != 1 or not (lam.shape == b.shape == a.shape):
        raise ValueError("eigenvalues, b_coeffs and x0_coeffs must share one length")
    if np.any(lam <= 0):
        raise ValueError("eigenvalues must be positive")
    A = np.diag(lam)
    Ab = lam * b
    c = 0.5 * float(b @ Ab)
    plus = QuadraticComponent(A, -Ab, c)  # 1/2 (x-b)'A(x-b), odd i
    minus = QuadraticComponent(A, Ab, c)  # 1/2 (x+b)'A(x+b), even i
    comps = tuple(plus if i % 2 == 0 else minus for i in range(n))
    problem = FiniteSumProblem(comps, np.zeros(lam.size), "lower_bound")
    inst = LowerBoundInstance(tuple(lam.tolist()), tuple(b.tolist()), int(n), tuple(a.tolist()))
    return problem, inst


def sparsity_factor(support_sets) -> float:
    """Largest fraction of supports that intersect a given support (itself included)."""
    sets = [frozenset(s) for s in support_sets]
    n = len(sets)
    return max(sum(1 for f in sets if e & f) for e in sets) / n


def make_sparse_problem(n: int, d: int, group_sizes, spectrum_range, seed: int, shift_scale: float = 1.0) -> FiniteSumProblem:
    """Quadratics whose groups live on disjoint coordinate blocks.

    Components of group ``g`` share block ``g`` of an even split of
    ``range(d)``; blocks partition the coordinates so the sparsity factor is
    ``max(group_sizes) / n``. The linear terms are standard normal times
    ``shift_scale``; ``shift_scale = 0`` puts the minimizer exactly at the origin.
    """
    sizes = [int(s) for s in group_sizes]
    if any(s < 1 for s in sizes) or sum(sizes) != n:
        raise ValueError(f"group sizes {sizes} must be positive and sum to n={n}")
    if d < len(sizes):
        raise ValueError(f"cannot give {len(sizes)} groups disjoint blocks in dimension {d}")
    lo, hi = _check_spectrum(spectrum_range)
    rng = make_generator(seed)
    blocks = np.array_split(np.arange(d), len(sizes))
    comps, supports = [], []
    for block, size in zip(blocks, sizes):
        for _ in range(size):
            A = _random_psd(rng, block.size, lo, hi)
            b = shift_scale * rng.standard_normal(block.size)
            comps.append(QuadraticComponent(A, b, support=block, d=d))
            supports.append(tuple(block.tolist()))
    x_star = _solve_minimizer(comps, d)
    return FiniteSumProblem(tuple(comps), x_star, "sparse", support_sets=tuple(supports))


def _polish_minimizer(problem: FiniteSumProblem, x, tol: float = 1e-12, max_iter: int = 100):
    """Damped Newton on the average until the gradient norm is at most ``tol``."""
    x = np.array(x, dtype=float)
    for _ in range(max_iter):
        g = problem.gradient(x)
        if np.linalg.norm(g) <= tol:
            return x
        H = problem.hessian(x)
        step = np.linalg.solve(H, g) if np.linalg.eigvalsh(H)[0] > 0 else g
        t, f0 = 1.0, problem.value(x)
        while problem.value(x - t * step) > f0 and t > 1e-12:
            t *= 0.5
        x = x - t * step
    raise RuntimeError("minimizer refinement did not converge")


def make_pl_problem(slope_coeffs) -> FiniteSumProblem:
    """Non-convex gradient-dominated instance ``f_i(x) = x^2 + 3 sin^2 x + b_i x``."""
    b = np.asarray(slope_coeffs, dtype=float).reshape(-1)
    if b.size < 1:
        raise ValueError("need at least one component")
    if abs(math.fsum(b)) > 1e-9 * (1.0 + np.abs(b).sum()):
        raise ValueError(f"slope coefficients must sum to zero, got {math.fsum(b)}")
    comps = tuple(SinePLComponent(float(s)) for s in b)
    provisional = FiniteSumProblem(comps, np.zeros(1), "pl", minimizer_exact=False)
    x_star = _polish_minimizer(provisional, np.zeros(1))
    return FiniteSumProblem(
        comps,
        x_star,
        "pl",
        minimizer_exact=False,
        analytic={"mu": PL_MU, "L": PL_SMOOTHNESS, "L_H": PL_HESSIAN_LIPSCHITZ},
    )


def make_vanishing_variance_problem(mu_list, d: int, x_star=0.0) -> FiniteSumProblem:
    """Components ``(mu_i/2)||x - x*||^2`` that share their minimizer."""
    mus = [float(m) for m in mu_list]
    if not mus or any(m <= 0 for m in mus):
        raise ValueError("all mu_i must be positive")
    center = np.broadcast_to(np.asarray(x_star, dtype=float), (d,)).copy()
    comps = tuple(IsotropicComponent(m, center) for m in mus)
    return FiniteSumProblem(comps, center, "vanishing_variance")


# ----------------------------------------------------------------------
# constants


@dataclass(frozen=True)
class ProblemConstants:
    mu: float
    L: float
    L_H: float
    G: float
    D: float
    rho: float
    kappa: float
    delta: float
    G_is_upper_bound: bool = True
    delta_kind: str = "upper_bound"  # "exact", "upper_bound" or "estimate"


def problem_constants(problem: FiniteSumProblem, D: float, *, samples: int = 2001, seed: int = 0) -> ProblemConstants:
    """Constants of ``problem`` over the ball of radius ``D`` around the minimizer.

    Constant-Hessian families get ``mu`` and ``L`` from eigenvalues, ``G`` as the
    bound ``max_i ||grad f_i(x*)|| + L_i D`` and ``delta`` as
    ``max_i ||grad f_i(x*)|| + ||H - H_i|| D``. The PL family uses its analytic
    constants and estimates ``delta`` from sample points in the ball.
    """
    if not D > 0:
        raise ValueError(f"domain radius must be positive, got {D}")
    x_star = problem.minimizer
    g_star = [np.linalg.norm(c.gradient(x_star)) for c in problem.components]
    rho = sparsity_factor(problem.support_sets) if problem.support_sets else 1.0

    if problem.constant_hessian:
        Hs = [c.hessian(x_star) for c in problem.components]
        H_bar = sum(Hs) / len(Hs)
        L_i = [np.linalg.eigvalsh(H)[-1] for H in Hs]
        mu = float(np.linalg.eigvalsh(H_bar)[0])
        L = float(max(L_i))
        L_H = 0.0
        G = float(max(g + l * D for g, l in zip(g_star, L_i)))
        delta = float(max(g + np.linalg.norm(H_bar - H, 2) * D for g, H in zip(g_star, Hs)))
        delta_kind = "exact" if max(g_star) == 0.0 else "upper_bound"
    else:
        mu = float(problem.analytic["mu"])
        L = float(problem.analytic["L"])
        L_H = float(problem.analytic["L_H"])
        G = float(max(g + L * D for g in g_star))
        delta = _sampled_gradient_error(problem, D, samples, seed)
        delta_kind = "estimate"

    return ProblemConstants(
        mu=mu, L=L, L_H=L_H, G=G, D=float(D), rho=rho, kappa=L / mu, delta=delta, delta_kind=delta_kind
    )


def _sampled_gradient_error(problem: FiniteSumProblem, D: float, samples: int, seed: int) -> float:
    d = problem.d
    if d == 1:
        pts = problem.minimizer + np.linspace(-D, D, samples)[:, None]
    else:
        rng = make_generator(seed)
        u = rng.standard_normal((samples, d))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        r = D * rng.uniform(size=(samples, 1)) ** (1.0 / d)
        pts = np.vstack([problem.minimizer, problem.minimizer + r * u, problem.minimizer + D * u])
    full = problem.gradient(pts)
    return float(max(np.linalg.norm(full - c.gradient(pts), axis=-1).max() for c in problem.components))
