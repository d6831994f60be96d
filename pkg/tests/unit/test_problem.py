from __future__ import annotations

import math

import numpy as np
import pytest
from domain.errors import ConstraintViolation, ExpressionError, ProblemValidationError
from domain.grid import build_grid
from domain.operator import build_quadrature
from domain.problem import (
    ConstantFactor,
    ControlProblem,
    KernelSpec,
    MixedSpec,
    check_example_constraints,
    constant_cost_problem,
    example_1_1_problem,
    expanding_drift_problem,
    lyapunov_from_expressions,
    parse_kernel,
    parse_scalar,
    parse_vector,
    random_bounded_problem,
    validate_problem,
)


def _zero_drift(x):
    return np.zeros_like(x)


def _unit_cost(x):
    return np.ones(x.shape[:-1])


# --- families -----------------------------------------------------------------


@pytest.mark.parametrize(
    ("gamma", "theta", "s", "broken"),
    [
        (1.6, 0.1, 0.45, "1/2 < s < 1"),
        (1.2, 0.1, 0.9, "gamma > s + 1/2"),
        (1.9, 0.1, 0.9, "gamma < 2s"),
        (1.6, -0.1, 0.9, "theta >= 0"),
        (1.6, 0.5, 0.9, "theta < (2s - gamma)(2s - 1)"),
    ],
)
def test_constraint_chain_names_first_broken_inequality(gamma, theta, s, broken):
    with pytest.raises(ConstraintViolation) as info:
        check_example_constraints(gamma, theta, s)
    assert info.value.inequality == broken


def test_example_family_shapes():
    p = example_1_1_problem(1.6, 0.1, 2, 0.9, family_size=2)
    assert p.controls == ("base", "fast")
    assert p.d == 2
    assert p.lyapunov is not None
    assert p.params["mu"] == pytest.approx(0.1 / (1.6 * 0.8))

    x = np.array([[3.0, 4.0]])
    # b(x) = -x |x|^(theta - 1), doubled for the fast control
    np.testing.assert_allclose(p.drift_at("base", x), -x * 5.0 ** (0.1 - 1.0))
    np.testing.assert_allclose(p.drift_at("fast", x), -2.0 * x * 5.0 ** (0.1 - 1.0))
    assert p.cost_at("fast", x)[0] == pytest.approx(p.cost_at("base", x)[0] + 0.5)


def test_lyapunov_function_is_a_power_far_out():
    p = example_1_1_problem(1.6, 0.1, 1, 0.9)
    x = np.array([[0.0], [0.5], [2.0], [-7.0]])
    V = p.lyapunov.V(x)
    np.testing.assert_allclose(V[2:], np.abs(x[2:, 0]) ** 1.6)
    assert np.all(V >= 0.0)


def test_random_family_is_deterministic():
    x = np.linspace(-3.0, 3.0, 13)[:, None]
    a = random_bounded_problem(11, controls=3)
    b = random_bounded_problem(11, controls=3)
    c = random_bounded_problem(12, controls=3)
    for tau in a.controls:
        np.testing.assert_array_equal(a.cost_at(tau, x), b.cost_at(tau, x))
    assert a.params == b.params
    assert not np.array_equal(a.cost_at("c0", x), c.cost_at("c0", x))
    assert 0.5 <= a.discount <= 1.0


def test_constant_cost_family_pushes_both_ways():
    p = constant_cost_problem(2.0, 1, 0.75, controls=2, drift_scale=0.5)
    x = np.array([[2.0]])
    assert p.drift_at("c0", x)[0, 0] == pytest.approx(-1.0)
    assert p.drift_at("c1", x)[0, 0] == pytest.approx(1.0)
    assert p.cost_at("c1", x)[0] == 2.0


def test_expanding_drift_needs_strong_sink():
    with pytest.raises(ConstraintViolation):
        expanding_drift_problem(0.5, 1.0, 1.0, 1, 0.75)
    p = expanding_drift_problem(2.0, 1.0, 1.0, 1, 0.75)
    assert p.discounted
    assert p.zeroth_at("base", np.zeros((1, 1)))[0] == -2.0


def test_cost_shift_and_scale():
    p = constant_cost_problem(1.0, 1, 0.75)
    x = np.zeros((2, 1))
    np.testing.assert_allclose(p.shifted_cost(2.0).cost_at("c0", x), 3.0)
    np.testing.assert_allclose(p.scaled_cost(-2.0).cost_at("c0", x), -2.0)
    assert p.shifted_cost(2.0).params["cost_shift"] == 2.0


def test_malformed_problems_are_rejected():
    with pytest.raises(ProblemValidationError):
        KernelSpec(0.4, 1.0, 1.0, {})
    with pytest.raises(ProblemValidationError):
        KernelSpec(0.75, 2.0, 1.0, {})
    with pytest.raises(ProblemValidationError):
        ControlProblem(("a", "a"), 1, {"a": _zero_drift}, {"a": _unit_cost})
    with pytest.raises(ProblemValidationError, match="no entry"):
        ControlProblem(("a", "b"), 1, {"a": _zero_drift, "b": _zero_drift}, {"a": _unit_cost})
    with pytest.raises(ProblemValidationError):
        ControlProblem(("a",), 3, {"a": _zero_drift}, {"a": _unit_cost})


# --- validation ---------------------------------------------------------------


def _offsets(grid, s):
    return build_quadrature(grid, s, grid.radius + 1.0).all_offsets()[0]


def test_example_passes_validation():
    p = example_1_1_problem(1.6, 0.1, 1, 0.9)
    grid = build_grid(1, 0.25, 8.0)
    report = validate_problem(p, grid, _offsets(grid, 0.9))
    assert report.passed, report.failed()
    for name in (
        "kernel-symmetry",
        "kernel-bounds",
        "lyapunov-nonnegative",
        "lyapunov-rays",
        "lyapunov-integrability",
        "coefficient-growth",
        "lyapunov-polynomial-growth",
    ):
        assert name in report.names
    assert report.get("lyapunov-integrability").proxy
    assert report.c_circ is None


def test_asymmetric_kernel_is_reported_with_witness():
    s = 0.75

    def tilted(x, y):
        return (2.0 - 2.0 * s) * (1.0 + 0.4 * np.sin(y[..., 0]))

    p = ControlProblem(
        ("a",),
        1,
        {"a": _zero_drift},
        {"a": _unit_cost},
        kernel=KernelSpec(s, 0.5, 1.5, {"a": tilted}),
    )
    grid = build_grid(1, 0.25, 2.0)
    report = validate_problem(p, grid, _offsets(grid, s))
    check = report.get("kernel-symmetry")
    assert not check.passed
    assert check.witness is not None and len(check.witness) == 2
    assert report.get("kernel-bounds").passed


def test_kernel_outside_ellipticity_band_fails_bounds():
    s = 0.75
    p = ControlProblem(
        ("a",),
        1,
        {"a": _zero_drift},
        {"a": _unit_cost},
        kernel=KernelSpec(s, 1.0, 1.0, {"a": ConstantFactor(3.0 * (2.0 - 2.0 * s))}),
    )
    grid = build_grid(1, 0.25, 2.0)
    assert not validate_problem(p, grid, _offsets(grid, s)).get("kernel-bounds").passed


def test_negative_kernel_raises():
    s = 0.75
    p = ControlProblem(
        ("a",),
        1,
        {"a": _zero_drift},
        {"a": _unit_cost},
        kernel=KernelSpec(s, 1.0, 1.0, {"a": ConstantFactor(-1.0)}),
    )
    grid = build_grid(1, 0.25, 2.0)
    with pytest.raises(ProblemValidationError, match="negative"):
        validate_problem(p, grid, _offsets(grid, s))


def test_nan_cost_raises():
    def broken(x):
        return np.where(x[..., 0] > 1.0, np.nan, 0.0)

    p = ControlProblem(("a",), 1, {"a": _zero_drift}, {"a": broken})
    grid = build_grid(1, 0.25, 2.0)
    with pytest.raises(ProblemValidationError, match="cost"):
        validate_problem(p, grid, np.array([[0.25]]))


def test_zeroth_sign_is_checked_for_discounted_problems():
    p = random_bounded_problem(4)
    grid = build_grid(1, 0.25, 2.0)
    report = validate_problem(p, grid, _offsets(grid, p.kernel.s))
    assert report.get("zeroth-sign").passed
    assert report.c_circ == pytest.approx(p.discount)


def test_degenerate_diffusion_fails_ellipticity():
    def half(x):
        return 0.5 * np.ones((*x.shape[:-1], 1, 1))

    p = ControlProblem(
        ("a",),
        1,
        {"a": _zero_drift},
        {"a": _unit_cost},
        mixed=MixedSpec(diffusion={"a": half}, lambda_ell=1.0, Lambda_ell=1.0),
    )
    grid = build_grid(1, 0.25, 2.0)
    check = validate_problem(p, grid, np.array([[0.25]])).get("diffusion-ellipticity")
    assert not check.passed
    assert check.worst_value == pytest.approx(0.5)


# --- expressions --------------------------------------------------------------


def test_scalar_expressions_evaluate_on_points():
    f = parse_scalar("1 + sin(x1)^2", 1)
    np.testing.assert_allclose(f(np.array([[0.0], [math.pi / 2.0]])), [1.0, 2.0])
    g = parse_scalar("r**2 - 1", 2)
    np.testing.assert_allclose(g(np.array([[3.0, 4.0]])), [24.0])
    const = parse_scalar("2*pi", 2)
    assert const(np.zeros((3, 2))).shape == (3,)


def test_vector_and_kernel_expressions():
    b = parse_vector(["-x1", "x1*x2"], 2)
    np.testing.assert_allclose(b(np.array([[2.0, 3.0]])), [[-2.0, 6.0]])
    k = parse_kernel("0.5*(1 + 0.2*cos(x1)*cos(ry))", 1)
    x = np.zeros((1, 1))
    y = np.array([[math.pi], [-math.pi]])
    np.testing.assert_allclose(k(x, y), [0.4, 0.4])


def test_lyapunov_derivatives_are_symbolic():
    lyap = lyapunov_from_expressions("r^2", "r", 2, k0=2.0)
    x = np.array([[1.0, 2.0]])
    np.testing.assert_allclose(lyap.V(x), [5.0])
    np.testing.assert_allclose(lyap.grad(x), [[2.0, 4.0]])
    np.testing.assert_allclose(lyap.hessian(x), [2.0 * np.eye(2)])
    assert lyap.k0 == 2.0


@pytest.mark.parametrize(
    "text",
    ["", "z + 1", "__import__('os')", "x1 = 2", "x1; x2", "open[0]", "x3"],
)
def test_bad_expressions_are_rejected(text):
    with pytest.raises(ExpressionError):
        parse_scalar(text, 2)


def test_vector_length_must_match_dimension():
    with pytest.raises(ExpressionError):
        parse_vector(["x1"], 2)
