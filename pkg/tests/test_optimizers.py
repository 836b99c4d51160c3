import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from shufflelab.optimizers import Kind, OptimizerConfig, residual_bound, run_optimizer, theorem_step_size
from shufflelab.problems import (
    make_quadratic,
    make_vanishing_variance_problem,
    problem_constants,
    quadratic_from_matrices,
)
from shufflelab.rng import derive_seed, fisher_yates, make_generator

ALL_KINDS = list(Kind)


def half_square():
    return quadratic_from_matrices([[[1.0]]], [[0.0]])


class TestRng:
    def test_fisher_yates_is_permutation(self):
        rng = make_generator(3)
        for n in range(1, 20):
            assert sorted(fisher_yates(n, rng).tolist()) == list(range(n))

    def test_fisher_yates_uniform_on_three(self):
        rng = make_generator(12345)
        counts = {p: 0 for p in itertools.permutations(range(3))}
        draws = 60000
        for _ in range(draws):
            counts[tuple(fisher_yates(3, rng).tolist())] += 1
        expected = draws / 6
        chi2 = sum((c - expected) ** 2 / expected for c in counts.values())
        assert chi2 < 20.5  # 0.999 quantile of chi-square with 5 dof

    def test_streams_are_reproducible_and_keyed(self):
        a = make_generator(5, 1, 2).integers(0, 2**62, 4)
        b = make_generator(5, 1, 2).integers(0, 2**62, 4)
        c = make_generator(5, 2, 1).integers(0, 2**62, 4)
        assert np.array_equal(a, b) and not np.array_equal(a, c)
        assert derive_seed(9, 0, 512, 3) == derive_seed(9, 0, 512, 3)
        assert derive_seed(9, 0, 512, 3) != derive_seed(9, 0, 512, 4)


class TestRun:
    @pytest.mark.parametrize("kind", ALL_KINDS)
    def test_half_square_closed_form(self, kind):
        rec = run_optimizer(half_square(), OptimizerConfig(kind, 0.5, 3, seed=1, x0=np.array([1.0])))
        assert rec.final_point[0] == 0.125
        assert rec.final_sq_error == 0.125**2

    @pytest.mark.parametrize("kind", [Kind.SGD, Kind.RANDOM_SHUFFLE, Kind.IGD])
    def test_single_component_matches_gd(self, kind):
        p = make_quadratic(1, 3, (0.5, 2.0), 4)
        x0 = np.array([1.0, -2.0, 0.5])
        gd = run_optimizer(p, OptimizerConfig(Kind.GD, 0.3, 20, x0=x0))
        other = run_optimizer(p, OptimizerConfig(kind, 0.3, 20, seed=99, x0=x0))
        assert np.array_equal(gd.errors, other.errors)
        assert np.array_equal(gd.final_point, other.final_point)

    @given(st.lists(st.floats(0.05, 2.0), min_size=1, max_size=5), st.integers(1, 6), st.integers(0, 2**63))
    def test_vanishing_variance_product_formula(self, mus, epochs, seed):
        gamma = 0.9 / max(mus)
        p = make_vanishing_variance_problem(mus, 2, 0.0)
        x0 = np.array([1.0, 1.0])
        rec = run_optimizer(p, OptimizerConfig(Kind.RANDOM_SHUFFLE, gamma, epochs * len(mus), seed=seed, x0=x0))
        expected = math.prod((1 - gamma * m) ** 2 for m in mus) ** epochs * 2.0
        assert rec.final_sq_error == pytest.approx(expected, rel=1e-12, abs=1e-300)

    def test_recording_stride(self):
        p = make_quadratic(4, 2, (1, 2), 0)
        rec = run_optimizer(p, OptimizerConfig(Kind.RANDOM_SHUFFLE, 0.1, 20, record_every=6))
        assert rec.errors[:, 0].tolist() == [0, 6, 12, 18, 20]
        assert len(rec.epoch_endpoints) == 5 and len(rec.epoch_residual_norms) == 5

    def test_sgd_has_no_residuals(self):
        rec = run_optimizer(make_quadratic(4, 2, (1, 2), 0), OptimizerConfig(Kind.SGD, 0.1, 8))
        assert rec.epoch_residual_norms == []

    @pytest.mark.parametrize("kind", ALL_KINDS)
    def test_determinism(self, kind):
        p = make_quadratic(5, 3, (1, 3), 2)
        cfg = OptimizerConfig(kind, 0.05, 50, seed=derive_seed(1, 2))
        a, b = run_optimizer(p, cfg), run_optimizer(p, cfg)
        assert np.array_equal(a.errors, b.errors)
        assert np.array_equal(a.final_point, b.final_point)

    def test_rejections(self):
        p = make_quadratic(4, 2, (1, 2), 0)
        with pytest.raises(ValueError):
            run_optimizer(p, OptimizerConfig(Kind.RANDOM_SHUFFLE, 0.1, 10))
        for g in (0.0, -0.1):
            with pytest.raises(ValueError):
                run_optimizer(p, OptimizerConfig(Kind.SGD, g, 8))

    def test_divergence_reported(self):
        rec = run_optimizer(half_square(), OptimizerConfig(Kind.SGD, 1e200, 10))
        assert rec.diverged_at is not None and rec.diverged_at <= 10
        assert math.isnan(rec.final_sq_error)

    def test_exited_ball_flag(self):
        rec = run_optimizer(half_square(), OptimizerConfig(Kind.GD, 3.0, 5, D=1.5))
        assert rec.exited_ball
        rec = run_optimizer(half_square(), OptimizerConfig(Kind.GD, 0.5, 5, D=1.5))
        assert not rec.exited_ball

    @pytest.mark.parametrize("kind", ALL_KINDS)
    @given(gamma=st.floats(0.01, 0.99), seed=st.integers(0, 2**63))
    def test_contraction_on_identity(self, kind, gamma, seed):
        p = quadratic_from_matrices([np.eye(2)] * 3, [np.zeros(2)] * 3)
        rec = run_optimizer(p, OptimizerConfig(kind, gamma, 12, seed=seed))
        d = rec.errors[:, 1]
        assert np.all(np.diff(d) <= 0)

    @given(st.integers(2, 12), st.integers(0, 2**32), st.integers(1, 5))
    def test_residual_bound_in_ball(self, n, seed, epochs):
        p = make_quadratic(n, 3, (0.5, 2.0), seed)
        D = 2.0 * float(np.linalg.norm(np.ones(3) - p.minimizer)) + 1.0
        c = problem_constants(p, D)
        gamma = 0.5 / (n * c.L)
        rec = run_optimizer(p, OptimizerConfig(Kind.RANDOM_SHUFFLE, gamma, epochs * n, seed=seed, D=D))
        if not rec.exited_ball:
            assert max(rec.epoch_residual_norms) <= residual_bound(n, gamma, c)


class TestStepSizes:
    def constants(self, mu=1.0, L=2.0):
        p = quadratic_from_matrices([np.diag([mu, L])], [np.zeros(2)])
        return problem_constants(p, 1.0)

    def test_thm1_value(self):
        s = theorem_step_size("THM1", 1000, self.constants(), 4)
        assert s.gamma == pytest.approx(0.0276310, abs=5e-8)

    def test_thm5_is_half_thm1(self):
        c = self.constants()
        assert theorem_step_size("THM5", 1000, c, 4).gamma == pytest.approx(
            0.5 * theorem_step_size("THM1", 1000, c, 4).gamma, rel=1e-15)

    def test_thm2_thm4_coefficient(self):
        c = self.constants()
        for t in ("THM2", "THM4"):
            assert theorem_step_size(t, 500, c, 4).gamma == pytest.approx(8 * math.log(500) / 500)

    def test_thm6_cap_dominates_for_large_n(self):
        c = self.constants(1.0, 50.0)
        s = theorem_step_size("THM6", 1000, c, 10**6)
        assert s.active_term == "1/(16nL)"
        assert s.gamma == pytest.approx(1 / (16 * 10**6 * 50.0))

    def test_precondition_report(self):
        c = self.constants(1.0, 2.0)  # kappa 2, threshold 6 * 3 * n
        s = theorem_step_size("THM1", 1000, c, 4)
        assert s.precondition_threshold == pytest.approx(72.0)
        assert s.precondition_value == pytest.approx(1000 / math.log(1000))
        assert s.satisfied
        assert not theorem_step_size("THM1", 100, c, 4).satisfied

    def test_rejections(self):
        c = self.constants()
        with pytest.raises(ValueError):
            theorem_step_size("THM1", 1, c, 4)
        with pytest.raises(ValueError):
            theorem_step_size("THM9", 100, c, 4)
