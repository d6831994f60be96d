from __future__ import annotations

from dataclasses import replace

import numpy as np
import pytest
from domain.errors import MissingLyapunovDataError
from domain.grid import ExteriorRule, build_grid
from domain.lyapunov import certify_problem
from domain.operator import apply, assemble, build_quadrature
from domain.oracle import dense_apply, dense_fixed_point, dense_oracles
from domain.problem import constant_cost_problem, example_1_1_problem, random_bounded_problem
from domain.problem.model import eval_scalar
from domain.solvers import barrier_check, check_barrier, solve_policy_iteration


def _operator(p, radius, *, hx=0.25, ext=None):
    grid = build_grid(p.d, hx, radius)
    q = build_quadrature(grid, p.kernel.s, grid.radius + 1.0)
    return assemble(p, grid, q, ext if ext is not None else ExteriorRule.zero()), q


@pytest.mark.parametrize("seed", range(10))
def test_matches_dense_fixed_point(seed):
    p = random_bounded_problem(seed, controls=2)
    opr, q = _operator(p, 4.0)
    assert opr.n == 33

    sol = solve_policy_iteration(opr, 1e-12, 60)
    assert sol.converged
    oracles = dense_oracles(p, opr.grid, q, opr.exterior)
    reference = dense_fixed_point(oracles, tol=1e-11)
    np.testing.assert_allclose(sol.w, reference, rtol=0.0, atol=1e-8)


def test_dense_oracle_reproduces_sparse_stencils():
    p = random_bounded_problem(3, controls=2)
    opr, q = _operator(p, 3.0)
    oracles = dense_oracles(p, opr.grid, q, opr.exterior)
    u = np.random.default_rng(0).normal(size=opr.n)
    for t, oracle in enumerate(oracles):
        fast = apply(opr, t, u)
        slow = dense_apply(oracle, u)
        scale = float(np.max(np.abs(fast))) + 1.0
        assert np.max(np.abs(fast - slow)) <= 1e-10 * scale


def test_constant_solution_with_matching_exterior():
    kappa, alpha = 1.5, 0.25
    p = constant_cost_problem(kappa, 1, 0.75).with_discount(alpha)
    opr, _ = _operator(p, 4.0, ext=ExteriorRule.constant(kappa / alpha))
    sol = solve_policy_iteration(opr, 1e-12, 30, alpha=alpha)
    assert sol.converged
    np.testing.assert_allclose(sol.w, kappa / alpha, atol=1e-9)
    assert sol.lambda_alpha == pytest.approx(kappa, abs=1e-9)


@pytest.mark.parametrize("seed", range(10))
def test_zero_cost_gives_zero_solution(seed):
    # discrete Liouville: g = 0, strictly negative zeroth term, zero outside
    p = random_bounded_problem(seed, controls=2).scaled_cost(0.0)
    assert p.discount is not None and p.discount >= 0.5
    opr, _ = _operator(p, 4.0)
    sol = solve_policy_iteration(opr, 1e-10, 30)
    assert sol.converged
    assert np.max(np.abs(sol.w)) <= 1e-10


def test_zero_cost_keeps_the_first_control():
    p = constant_cost_problem(0.0, 1, 0.75).with_discount(0.1)
    opr, _ = _operator(p, 4.0)
    sol = solve_policy_iteration(opr, 1e-10, 30)
    assert np.max(np.abs(sol.w)) <= 1e-10
    np.testing.assert_array_equal(sol.policy, 0)


def _raised(p, seed):
    """Add a random smooth nonnegative bump to every running cost."""
    rng = np.random.default_rng(1000 + seed)
    cost = {}
    for tau in p.controls:
        height = float(rng.uniform(0.0, 0.5))
        omega = rng.uniform(0.2, 2.0, size=p.d)
        phase = float(rng.uniform(0.0, 2.0 * np.pi))

        def bump(x, base=p.cost[tau], height=height, omega=omega, phase=phase):
            return eval_scalar(base, x) + height * (1.0 + np.sin(x @ omega + phase))

        cost[tau] = bump
    return replace(p, cost=cost)


@pytest.mark.parametrize("seed", range(10))
def test_comparison_principle(seed):
    p = random_bounded_problem(seed, controls=2)
    raised = _raised(p, seed)
    low, _ = _operator(p, 4.0)
    high, _ = _operator(raised, 4.0)
    x = low.grid.nodes
    for tau in p.controls:
        assert np.all(p.cost_at(tau, x) <= raised.cost_at(tau, x))
    w_low = solve_policy_iteration(low, 1e-12, 60).w
    w_high = solve_policy_iteration(high, 1e-12, 60).w
    assert np.all(w_low <= w_high + 1e-10)


@pytest.mark.parametrize("seed", range(3))
def test_lower_exterior_data_gives_lower_solution(seed):
    p = random_bounded_problem(seed, controls=2)

    def high(x):
        return 0.5 + np.cos(x[..., 0])

    def low(x):
        return high(x) - 0.2 - 0.3 * (1.0 + np.sin(2.0 * x[..., 0]))

    upper, _ = _operator(p, 4.0, ext=ExteriorRule.function(high))
    lower, _ = _operator(p, 4.0, ext=ExteriorRule.function(low))
    w_high = solve_policy_iteration(upper, 1e-12, 60).w
    w_low = solve_policy_iteration(lower, 1e-12, 60).w
    assert np.all(w_low <= w_high + 1e-10)
    assert np.any(w_low < w_high - 1e-6)


def test_scaling_the_cost_scales_the_solution():
    p = random_bounded_problem(8, controls=2)
    base_opr, _ = _operator(p, 4.0)
    scaled_opr, _ = _operator(p.scaled_cost(2.5), 4.0)
    base = solve_policy_iteration(base_opr, 1e-12, 60)
    scaled = solve_policy_iteration(scaled_opr, 1e-12, 60)
    np.testing.assert_allclose(scaled.w, 2.5 * base.w, rtol=1e-8, atol=1e-10)
    np.testing.assert_array_equal(scaled.policy, base.policy)


def test_policy_iterates_are_monotone():
    p = example_1_1_problem(1.6, 0.1, 1, 0.9, family_size=2).with_discount(0.25)
    opr, _ = _operator(p, 8.0)
    sol = solve_policy_iteration(opr, 1e-10, 60)
    assert sol.converged
    assert sol.diagnostics["monotone_violations"] == 0
    assert sol.residual_inf_norm <= 1e-10


def test_value_iteration_fallback_reaches_tolerance():
    p = random_bounded_problem(2, controls=2)
    opr, _ = _operator(p, 3.0)
    sol = solve_policy_iteration(opr, 1e-8, 1)
    assert sol.converged
    assert sol.residual_inf_norm <= 1e-8


def test_trace_rows_are_recorded():
    class Recorder:
        def __init__(self):
            self.rows = []

        def record(self, row):
            self.rows.append(row)

    p = random_bounded_problem(1, controls=2)
    opr, _ = _operator(p, 3.0)
    rec = Recorder()
    sol = solve_policy_iteration(opr, 1e-10, 60, trace=rec, alpha=0.5, radius=3.0)
    assert [r.iteration for r in rec.rows] == list(range(1, sol.iterations + 1))
    assert all(r.stage == "policy-iteration" and r.radius == 3.0 for r in rec.rows)


@pytest.mark.slow
@pytest.mark.parametrize("alpha", [0.5, 0.25, 0.125])
@pytest.mark.parametrize("radius", [8.0, 16.0, 32.0])
def test_example_barrier_holds(alpha, radius):
    p = example_1_1_problem(1.6, 0.1, 1, 0.9)
    opr, q = _operator(p.with_discount(alpha), radius)
    sol = solve_policy_iteration(opr, 1e-10, 60, alpha=alpha)
    assert sol.converged

    certified, cert = certify_problem(p, opr.grid, q)
    assert cert.passed
    report = check_barrier(sol, certified, opr.grid)
    assert report.passed, report.violations[:3]
    assert report.worst_margin > 0.0
    assert report.m_bound_passed


def test_barrier_detects_injected_violation():
    p = example_1_1_problem(1.6, 0.1, 1, 0.9).with_discount(0.5)
    grid = build_grid(1, 0.25, 8.0)
    assert barrier_check(np.zeros(grid.n), p, grid).passed

    report = barrier_check(np.zeros(grid.n), p, grid)
    V = eval_scalar(p.lyapunov.V, grid.nodes)
    bad = V + 2.0 * report.k0_effective / report.c_circ
    failed = barrier_check(bad, p, grid)
    assert not failed.passed
    assert len(failed.violations) == grid.n
    assert all(v.margin < 0.0 for v in failed.violations)


def test_barrier_needs_lyapunov_data():
    p = random_bounded_problem(0)
    grid = build_grid(1, 0.25, 2.0)
    with pytest.raises(MissingLyapunovDataError):
        barrier_check(np.zeros(grid.n), p, grid)
