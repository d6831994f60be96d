from __future__ import annotations

import numpy as np
import pytest
from domain.errors import MonotonicityError, ProblemValidationError, QuadratureError
from domain.grid import ExteriorRule, build_grid
from domain.operator import apply, apply_inf, assemble, build_quadrature, stencil_dump
from domain.problem import (
    ConstantFactor,
    ControlProblem,
    KernelSpec,
    MixedSpec,
    constant_cost_problem,
    example_1_1_problem,
    mixed_constant_problem,
    modulated_factor,
    random_bounded_problem,
)


def _zero_drift(x):
    return np.zeros_like(x)


def _zero_cost(x):
    return np.zeros(x.shape[:-1])


def _pure_jump(d: int, s: float, factor) -> ControlProblem:
    return ControlProblem(
        controls=("a",),
        d=d,
        drift={"a": _zero_drift},
        cost={"a": _zero_cost},
        kernel=KernelSpec(s, 0.5, 1.5, {"a": factor}),
        name="pure-jump",
    )


def _affine(x):
    return 0.7 - 1.3 * x[..., 0] + (0.4 * x[..., 1] if x.shape[-1] > 1 else 0.0)


@pytest.mark.parametrize(
    ("d", "s", "modulation"), [(1, 0.6, 0.0), (1, 0.9, 0.4), (2, 0.75, 0.0), (2, 0.75, 0.3)]
)
def test_affine_functions_are_annihilated(d, s, modulation):
    grid = build_grid(d, 0.25, 2.0)
    q = build_quadrature(grid, s, grid.radius + 1.0)
    p = _pure_jump(d, s, modulated_factor(s, modulation))
    # exterior values equal the affine function itself, so every target is exact
    opr = assemble(p, grid, q, ExteriorRule.function(_affine))

    u = _affine(grid.nodes)
    out = apply(opr, "a", u)
    scale = float(np.max(abs(opr.matrices[0]).sum(axis=1))) * float(np.max(np.abs(u)) + 1.0)
    assert np.max(np.abs(out)) <= 1e-12 * scale


def test_off_diagonals_nonnegative_with_upwinded_drift():
    grid = build_grid(1, 0.25, 4.0)
    p = example_1_1_problem(1.6, 0.1, 1, 0.9, family_size=2, modulation=0.3, outward=True)
    q = build_quadrature(grid, 0.9, grid.radius + 1.0)
    opr = assemble(p, grid, q, ExteriorRule.zero())

    for M in opr.matrices:
        coo = M.tocoo()
        off = coo.row != coo.col
        assert np.all(coo.data[off] >= 0.0)
        assert np.all(M.diagonal() <= 0.0)


def test_row_sums_match_exterior_mass():
    grid = build_grid(1, 0.25, 3.0)
    p = constant_cost_problem(1.0, 1, 0.75)
    q = build_quadrature(grid, 0.75, grid.radius + 1.0)
    opr = assemble(p, grid, q, ExteriorRule.zero())

    ones = np.ones(grid.n)
    for t, M in enumerate(opr.matrices):
        np.testing.assert_allclose(M @ ones, opr.row_sums[t], atol=1e-10)
    assert np.all(opr.exterior_mass > 0.0)
    np.testing.assert_allclose(opr.exterior_constant, 0.0)


def test_nearest_rule_conserves_mass():
    grid = build_grid(2, 0.5, 3.0)
    p = constant_cost_problem(0.0, 2, 0.75)
    q = build_quadrature(grid, 0.75, grid.radius + 1.0)
    opr = assemble(p, grid, q, ExteriorRule.nearest())

    np.testing.assert_array_equal(opr.row_sums, 0.0)
    ones = np.ones(grid.n)
    for M in opr.matrices:
        scale = float(np.max(abs(M).sum(axis=1)))
        assert np.max(np.abs(M @ ones)) <= 1e-12 * scale


def test_constant_cost_appears_in_constants():
    grid = build_grid(1, 0.5, 2.0)
    p = constant_cost_problem(-3.0, 1, 0.75)
    q = build_quadrature(grid, 0.75, grid.radius + 1.0)
    opr = assemble(p, grid, q, ExteriorRule.nearest())
    np.testing.assert_allclose(apply(opr, "c1", np.zeros(grid.n)), -3.0)


def test_workers_do_not_change_the_operator():
    grid = build_grid(1, 0.25, 4.0)
    p = example_1_1_problem(1.6, 0.1, 1, 0.9, family_size=2)
    q = build_quadrature(grid, 0.9, grid.radius + 1.0)
    one = assemble(p, grid, q, ExteriorRule.zero())
    two = assemble(p, grid, q, ExteriorRule.zero(), workers=2)
    for a, b in zip(one.matrices, two.matrices, strict=True):
        assert abs(a - b).max() == 0.0


@pytest.mark.parametrize(("d", "target"), [(1, 2.0), (2, 4.0)])
def test_local_diffusion_is_exact_on_quadratics(d, target):
    grid = build_grid(d, 0.25, 2.0)
    p = mixed_constant_problem(0.0, d, diffusion=1.0)

    def quadratic(x):
        return np.sum(x * x, axis=-1)

    opr = assemble(p, grid, None, ExteriorRule.function(quadratic))
    np.testing.assert_allclose(apply(opr, 0, quadratic(grid.nodes)), target, atol=1e-10)


def test_negative_kernel_weight_is_rejected():
    grid = build_grid(1, 0.25, 2.0)
    q = build_quadrature(grid, 0.75, grid.radius + 1.0)
    p = _pure_jump(1, 0.75, ConstantFactor(-0.1))
    with pytest.raises(MonotonicityError):
        assemble(p, grid, q, ExteriorRule.zero())


def test_non_dominant_diffusion_is_rejected():
    grid = build_grid(2, 0.5, 2.0)

    def skewed(x):
        return np.array([[1.0, 2.0], [2.0, 1.0]])

    p = ControlProblem(
        controls=("a",),
        d=2,
        drift={"a": _zero_drift},
        cost={"a": _zero_cost},
        mixed=MixedSpec(diffusion={"a": skewed}),
    )
    with pytest.raises(ProblemValidationError, match="diagonally dominant"):
        assemble(p, grid, None, ExteriorRule.zero())


def test_quadrature_must_match_problem():
    grid = build_grid(1, 0.25, 2.0)
    p = constant_cost_problem(1.0, 1, 0.75)
    with pytest.raises(QuadratureError):
        assemble(p, grid, None, ExteriorRule.zero())
    other = build_quadrature(grid, 0.9, grid.radius + 1.0)
    with pytest.raises(QuadratureError):
        assemble(p, grid, other, ExteriorRule.zero())
    with pytest.raises(ProblemValidationError):
        assemble(p, build_grid(2, 0.25, 2.0), None, ExteriorRule.zero())


def test_stencil_dump_rows_are_consistent():
    grid = build_grid(1, 0.5, 2.0)
    p = constant_cost_problem(1.0, 1, 0.75)
    q = build_quadrature(grid, 0.75, grid.radius + 1.0)
    opr = assemble(p, grid, q, ExteriorRule.zero())

    dump = stencil_dump(opr, [0, grid.n - 1], r_far=q.far_radius)
    assert dump.exterior == "zero"
    assert len(dump.entries) == 2 * len(opr.controls)
    for entry in dump.entries:
        assert entry.targets == sorted(entry.targets)
        assert entry.node not in entry.targets
        assert all(w >= 0.0 for w in entry.weights)
        # diagonal + off-diagonals + exterior mass is the zeroth coefficient, here 0
        total = entry.diagonal + sum(entry.weights) + entry.exterior_mass
        assert abs(total) <= 1e-10 * abs(entry.diagonal)
        assert entry.constant == pytest.approx(1.0)


def _lopsided(s: float):
    base = 2.0 - 2.0 * s

    def factor(x, y):
        return base * (1.0 + 0.3 * np.sin(y[..., 0]) + 0.2 * np.cos(x[..., 0]))

    return factor


@pytest.mark.parametrize(("d", "hx"), [(1, 0.25), (2, 0.5)])
def test_jump_weights_are_even_in_the_offset(d, hx):
    grid = build_grid(d, hx, 2.0)
    q = build_quadrature(grid, 0.75, grid.radius + 1.0)
    opr = assemble(_pure_jump(d, 0.75, _lopsided(0.75)), grid, q, ExteriorRule.zero())
    M = opr.matrices[0].tocsr()

    pairs = 0
    for i in range(grid.n):
        cols = M.indices[M.indptr[i] : M.indptr[i + 1]]
        vals = M.data[M.indptr[i] : M.indptr[i + 1]]
        row = dict(zip(cols.tolist(), vals.tolist(), strict=True))
        mirror = grid.nearest_index(2.0 * grid.nodes[i] - grid.nodes[cols])
        for j, k, v in zip(cols, mirror, vals, strict=True):
            if j == i or k < 0:
                continue
            assert row[int(k)] == pytest.approx(v, rel=1e-12)
            pairs += 1
    assert pairs > grid.n


@pytest.mark.parametrize(("d", "hx"), [(1, 0.25), (2, 0.5)])
def test_jump_row_totals_match_quadrature_mass(d, hx):
    s, level = 0.75, 0.5
    grid = build_grid(d, hx, 2.0)
    q = build_quadrature(grid, s, grid.radius + 1.0)
    opr = assemble(_pure_jump(d, s, ConstantFactor(level)), grid, q, ExteriorRule.zero())
    M = opr.matrices[0]

    _, ws = q.all_offsets()
    assert ws.sum() == pytest.approx(q.weights.sum() + d * q.core_coeff + q.tail_mass, rel=1e-13)
    total = 2.0 * level * float(ws.sum())
    np.testing.assert_allclose(-M.diagonal(), total, rtol=1e-12)
    off = np.asarray(M.sum(axis=1)).ravel() - M.diagonal()
    np.testing.assert_allclose(off + opr.exterior_mass[0], total, rtol=1e-12)
    np.testing.assert_allclose(opr.row_sums[0], -opr.exterior_mass[0])


@pytest.mark.parametrize(("d", "hx"), [(1, 0.25), (2, 0.5)])
def test_reflection_with_flipped_drift(d, hx):
    s = 0.75
    grid = build_grid(d, hx, 2.0)
    q = build_quadrature(grid, s, grid.radius + 1.0)
    push = np.array([0.4, -0.3])[:d]
    factor = modulated_factor(s, 0.3)

    def drift(x):
        return np.sin(x) + push

    def cost(x):
        return np.cos(x[..., 0]) + 0.2 * x[..., 0]

    def outside(x):
        return np.exp(-np.sum(x * x, axis=-1)) + 0.1 * x[..., 0]

    def build(b, g):
        return ControlProblem(
            controls=("a",),
            d=d,
            drift={"a": b},
            cost={"a": g},
            kernel=KernelSpec(s, 0.5, 1.5, {"a": factor}),
            discount=0.3,
        )

    forward = assemble(build(drift, cost), grid, q, ExteriorRule.function(outside))
    backward = assemble(
        build(lambda x: -drift(-x), lambda x: cost(-x)),
        grid,
        q,
        ExteriorRule.function(lambda x: outside(-x)),
    )
    flip = grid.nearest_index(-grid.nodes)
    assert np.all(flip >= 0)

    u = outside(grid.nodes) + 0.2 * np.sin(3.0 * grid.nodes[:, -1])
    there = apply(forward, 0, u)
    back = apply(backward, 0, u[flip])
    scale = float(np.max(abs(forward.matrices[0]).sum(axis=1))) * (float(np.max(np.abs(u))) + 1.0)
    np.testing.assert_allclose(back, there[flip], rtol=0.0, atol=1e-12 * scale)


def test_constant_shift_moves_apply_by_row_sums():
    kappa = 1.7
    p = random_bounded_problem(4, controls=2)
    grid = build_grid(1, 0.25, 3.0)
    q = build_quadrature(grid, p.kernel.s, grid.radius + 1.0)
    opr = assemble(p, grid, q, ExteriorRule.zero())
    np.testing.assert_allclose(opr.zeroth, -p.discount)

    u = np.cos(grid.nodes[:, 0])
    scale = float(np.max([abs(M).sum(axis=1).max() for M in opr.matrices])) * (kappa + 2.0)
    for t in range(len(opr.controls)):
        shift = apply(opr, t, u + kappa) - apply(opr, t, u)
        expected = kappa * opr.zeroth[t] - kappa * opr.exterior_mass[t]
        np.testing.assert_allclose(shift, expected, rtol=0.0, atol=1e-12 * scale)
        assert np.all(opr.exterior_mass[t] > 0.0)

    def outside(x):
        return np.cos(x[..., 0])

    def lifted_outside(x):
        return np.cos(x[..., 0]) + kappa

    base = assemble(p, grid, q, ExteriorRule.function(outside))
    lifted = assemble(p, grid, q, ExteriorRule.function(lifted_outside))
    for t in range(len(opr.controls)):
        shift = apply(lifted, t, u + kappa) - apply(base, t, u)
        np.testing.assert_allclose(shift, -p.discount * kappa, rtol=0.0, atol=1e-12 * scale)


def test_lowering_the_exterior_lowers_apply():
    grid = build_grid(1, 0.25, 2.0)
    p = constant_cost_problem(1.0, 1, 0.75)
    q = build_quadrature(grid, 0.75, grid.radius + 1.0)

    def high(x):
        return 1.0 + x[..., 0] ** 2

    def low(x):
        return high(x) - 0.25 - 0.5 * (1.0 + np.sin(x[..., 0]))

    upper = assemble(p, grid, q, ExteriorRule.function(high))
    lower = assemble(p, grid, q, ExteriorRule.function(low))
    u = high(grid.nodes)
    for t in range(len(p.controls)):
        gap = apply(upper, t, u) - apply(lower, t, u)
        assert np.all(gap >= 0.25 * upper.exterior_mass[t] - 1e-10)


def test_apply_inf_with_one_control_is_apply():
    grid = build_grid(1, 0.25, 2.0)
    q = build_quadrature(grid, 0.75, grid.radius + 1.0)
    opr = assemble(_pure_jump(1, 0.75, ConstantFactor(0.5)), grid, q, ExteriorRule.zero())
    u = np.sin(grid.nodes[:, 0])
    value, policy = apply_inf(opr, u)
    np.testing.assert_array_equal(value, apply(opr, "a", u))
    np.testing.assert_array_equal(policy, 0)


def test_apply_inf_picks_the_dominating_control():
    factor = ConstantFactor(0.5)

    def drift(x):
        return -0.5 * x

    def cost(x):
        return np.cos(x[..., 0])

    def cheaper(x):
        return np.cos(x[..., 0]) - 0.5

    p = ControlProblem(
        controls=("base", "cheap"),
        d=1,
        drift={"base": drift, "cheap": drift},
        cost={"base": cost, "cheap": cheaper},
        kernel=KernelSpec(0.75, 0.5, 1.5, {"base": factor, "cheap": factor}),
    )
    grid = build_grid(1, 0.25, 2.0)
    q = build_quadrature(grid, 0.75, grid.radius + 1.0)
    opr = assemble(p, grid, q, ExteriorRule.zero())
    u = grid.nodes[:, 0] ** 2
    value, policy = apply_inf(opr, u)
    np.testing.assert_array_equal(policy, 1)
    np.testing.assert_allclose(value, apply(opr, "base", u) - 0.5, atol=1e-10)


def test_apply_inf_follows_the_drift_downhill():
    # c0 pushes inward (b = -x/2), c1 outward; on u(x) = x the inward control wins for x > 0
    grid = build_grid(1, 0.25, 2.0)
    p = constant_cost_problem(0.0, 1, 0.75)
    q = build_quadrature(grid, 0.75, grid.radius + 1.0)

    def ramp(x):
        return x[..., 0]

    opr = assemble(p, grid, q, ExteriorRule.function(ramp))
    x = grid.nodes[:, 0]
    value, policy = apply_inf(opr, x)
    away = np.abs(x) >= grid.hx
    np.testing.assert_array_equal(policy[away], np.where(x[away] > 0.0, 0, 1))
    np.testing.assert_allclose(value, -0.5 * np.abs(x), atol=1e-9)
