from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from adasgo.errors import DomainViolation, LineSearchFailed, NoProgress, SingularHessian
from adasgo.experiments import ExperimentSpec, run_experiment
from adasgo.methods import AdaptiveSG, FixedPoints, MonteCarlo, SparseGrid
from adasgo.problems import BetaDensity, Problem, additive_problem, get_problem, toy_problem
from adasgo.solver import (
    DerivativeScheme,
    SolverConfig,
    bfgs_solve,
    dtom_surrogate_solve,
    estimate_gradient,
    estimate_hessian,
    hessian_condition,
    newton_solve,
    projected_bfgs_solve,
    projected_step,
)

CENTRAL = DerivativeScheme(stencil="central", fd_step=1e-3)
EPS = np.finfo(float).eps


def _deterministic(n: int = 2) -> Problem:
    """``h(u, w) = |u|^2`` for every ``w``."""
    return Problem("sq", 1, n, lambda u, w: np.full(len(np.atleast_2d(w)), float(u @ u)),
                   (BetaDensity(1, 1),), u_star=np.zeros(n), f_star=0.0)


def _constant(n: int = 2) -> Problem:
    return Problem("const", 1, n, lambda u, w: np.atleast_2d(w)[:, 0] ** 2, (BetaDensity(1, 1),))


class TestDerivativeScheme:
    def test_default_steps(self):
        assert DerivativeScheme().step(0.0) == pytest.approx(math.sqrt(EPS))
        assert DerivativeScheme(stencil="central").step(0.0) == pytest.approx(EPS ** (1 / 3))
        assert DerivativeScheme(stencil="central").step(0.0, 2) == pytest.approx(EPS**0.25)
        assert DerivativeScheme().step(4.0) == pytest.approx(4 * math.sqrt(EPS))

    def test_validation(self):
        with pytest.raises(ValueError):
            DerivativeScheme(stencil="backward")
        with pytest.raises(ValueError):
            DerivativeScheme(fd_step=-1.0)
        with pytest.raises(ValueError):
            DerivativeScheme(mode="sideways")


class TestGradient:
    @pytest.mark.parametrize("mode", ["diff-then-quad", "quad-then-diff"])
    def test_toy_at_zero(self, mode):
        p = toy_problem()
        scheme = DerivativeScheme(mode)
        g = estimate_gradient(p, np.zeros(1), scheme, AdaptiveSG(1e-10, 8))
        assert g.value[0] == pytest.approx(3.0, abs=10 * scheme.step(0.0))
        assert g.cost > 0

    def test_central_is_exact_on_toy(self):
        g = estimate_gradient(toy_problem(), np.array([-0.7]), CENTRAL, AdaptiveSG(1e-10, 8))
        assert g.value[0] == pytest.approx(2 * -0.7 + 3, abs=1e-10)

    def test_unpacks(self):
        value, cost, downsets = estimate_gradient(toy_problem(), np.zeros(1), CENTRAL, AdaptiveSG(1e-6, 8))
        assert len(value) == 1 and cost > 0 and len(downsets) == 1

    @given(st.lists(st.floats(0, 1), min_size=4, max_size=4))
    def test_additive_strictly_negative(self, u):
        p = additive_problem(4)
        g = estimate_gradient(p, np.array(u), DerivativeScheme(), AdaptiveSG(1e-6, 6))
        assert np.all(g.value < 0)

    @pytest.mark.parametrize("mode", ["diff-then-quad", "quad-then-diff"])
    def test_u_independent_gives_zero(self, mode):
        g = estimate_gradient(_constant(), np.array([0.3, -2.0]), DerivativeScheme(mode), AdaptiveSG(1e-6, 5))
        np.testing.assert_array_equal(g.value, np.zeros(2))

    def test_domain_violation(self):
        with pytest.raises(DomainViolation):
            estimate_gradient(additive_problem(3), np.array([0.5, 1.5, 0.5]))

    def test_box_edge_uses_one_sided_stencil(self):
        p = additive_problem(2)
        g = estimate_gradient(p, np.ones(2), CENTRAL, AdaptiveSG(1e-8, 6))
        np.testing.assert_allclose(g.value, p.exact_gradient(np.ones(2)), atol=1e-3)
        assert g.flags


class TestHessian:
    def test_toy(self):
        H = estimate_hessian(toy_problem(), np.array([0.4]), CENTRAL, AdaptiveSG(1e-10, 8))
        assert H.matrix[0, 0] == pytest.approx(2.0, abs=1e-6)
        assert H.kappa == pytest.approx(1.0)

    def test_u_independent_gives_zero(self):
        H = estimate_hessian(_constant(), np.array([0.3, -2.0]), CENTRAL, AdaptiveSG(1e-6, 5))
        np.testing.assert_array_equal(H.matrix, np.zeros((2, 2)))

    def test_control_constant_in_u(self):
        p = get_problem("control")
        quad = SparseGrid(2)
        a = estimate_hessian(p, np.zeros(7), CENTRAL, quad).matrix
        b = estimate_hessian(p, np.full(7, -0.5), CENTRAL, quad).matrix
        np.testing.assert_allclose(a, b, atol=1e-6)
        np.testing.assert_allclose(a, a.T)

    def test_condition(self):
        assert hessian_condition(np.diag([1.0, 1e-3])) == pytest.approx(1e3)
        assert hessian_condition(np.array([[np.nan]])) == math.inf


class TestNewton:
    def test_toy(self):
        cfg = SolverConfig(engine="newton", quad=AdaptiveSG(1e-10, 8), scheme=CENTRAL)
        u, trace = newton_solve(toy_problem(), np.zeros(1), cfg)
        assert u[0] == pytest.approx(-1.5, abs=1e-8)
        assert trace.iterations <= 2 and trace.converged

    def test_deterministic_quadratic(self):
        cfg = SolverConfig(engine="newton", quad=AdaptiveSG(1e-8, 3), scheme=CENTRAL)
        u, trace = newton_solve(_deterministic(), np.array([1.0, -2.0]), cfg)
        np.testing.assert_allclose(u, 0.0, atol=1e-8)
        assert trace.iterations == 1

    def test_control(self):
        p = get_problem("control")
        # classical grids converge slowly on the Beta(2,3) product density
        cfg = SolverConfig(engine="newton", quad=SparseGrid(6), scheme=CENTRAL, max_iters=5,
                           on_line_search_failure="stop")
        u, _ = newton_solve(p, np.zeros(7), cfg)
        np.testing.assert_allclose(u, p.u_star, atol=0.05)

    def test_singular_hessian(self):
        linear = Problem("lin", 1, 2, lambda u, w: u[0] + np.atleast_2d(w)[:, 0], (BetaDensity(1, 1),))
        cfg = SolverConfig(engine="newton", quad=AdaptiveSG(1e-6, 4), scheme=CENTRAL)
        with pytest.raises(SingularHessian):
            newton_solve(linear, np.zeros(2), cfg)


class TestBFGS:
    def test_matches_newton_on_quadratic(self):
        p = toy_problem()
        quad = AdaptiveSG(1e-10, 8)
        common = dict(quad=quad, scheme=CENTRAL, grad_tol=1e-12)
        u_b, _ = bfgs_solve(p, np.array([2.0]), SolverConfig(line_search="exact_quadratic", **common))
        u_n, _ = newton_solve(p, np.array([2.0]), SolverConfig(engine="newton", **common))
        assert u_b[0] == pytest.approx(u_n[0], abs=1e-9)

    def test_toy_armijo(self):
        cfg = SolverConfig(quad=AdaptiveSG(1e-10, 8), scheme=CENTRAL, line_search="armijo")
        u, trace = bfgs_solve(toy_problem(), np.zeros(1), cfg)
        assert u[0] == pytest.approx(-1.5, abs=1e-8)
        assert trace.to_csv().splitlines()[0] == "iter,grad_norm,objective,points,kappa"

    def test_inconsistent_objective_raises(self):
        # the objective rule has weight -1, so every descent direction of G increases F
        p = _deterministic(1)
        flipped = FixedPoints(np.array([[0.5]]), np.array([-1.0]))
        cfg = SolverConfig(quad=AdaptiveSG(1e-6, 3), objective_quad=flipped, scheme=CENTRAL, line_search="armijo")
        with pytest.raises((LineSearchFailed, NoProgress)):
            bfgs_solve(p, np.array([1.0]), cfg)
        u, trace = bfgs_solve(p, np.array([1.0]), SolverConfig(**{**cfg.__dict__, "on_line_search_failure": "stop"}))
        assert u[0] == 1.0 and "line search" in trace.message

    def test_fewer_points_than_classical_sparse_grid(self):
        dasg = run_experiment(ExperimentSpec("toy", "dasg_gp", [1e-10]))[0]
        sg = run_experiment(ExperimentSpec("toy", "sg_gp", [5]))[0]
        assert dasg.u_error <= 1e-12 and sg.u_error <= 1e-12
        assert dasg.avg_points < sg.avg_points


class TestProjected:
    @pytest.mark.parametrize(
        "u,expected", [((1.2, 0.5), (1.0, 0.5)), ((0.3, 0.7), (0.3, 0.7)), ((-3.0, -1.0), (0.0, 0.0))]
    )
    def test_projected_step(self, u, expected):
        np.testing.assert_array_equal(projected_step(np.array(u), (np.zeros(2), np.ones(2))), expected)

    def test_additive_reaches_upper_bound(self):
        p = additive_problem(50)
        cfg = SolverConfig(engine="projected_bfgs", quad=MonteCarlo(10, 1), objective_quad=AdaptiveSG(1e-6, 8))
        u, trace = projected_bfgs_solve(p, np.full(50, 0.5), cfg)
        np.testing.assert_array_equal(u, np.ones(50))
        assert trace.converged


class TestDTOM:
    def test_single_point(self):
        w0 = np.array([[0.3, 0.6]])
        u, _ = dtom_surrogate_solve(toy_problem(), np.zeros(1), FixedPoints(w0, np.ones(1)))
        assert u[0] == pytest.approx(-(0.09 + 3.6) / 2, abs=1e-8)

    def test_monte_carlo_closed_form(self):
        p = toy_problem()
        fixed = MonteCarlo(100, 5).frozen(p)
        u, _ = dtom_surrogate_solve(p, np.zeros(1), fixed)
        w = fixed.points
        assert u[0] == pytest.approx(-np.mean(w[:, 0] ** 2 + 10 * w[:, 1] ** 2) / 2, abs=1e-8)

    def test_full_box_gp(self):
        from adasgo.methods import ProductRule

        u, _ = dtom_surrogate_solve(toy_problem(), np.zeros(1), ProductRule(5, "gp"))
        assert u[0] == pytest.approx(-1.5, abs=1e-10)
