from __future__ import annotations

import numpy as np
import pytest
from domain.errors import MissingLyapunovDataError
from domain.grid import build_grid
from domain.lyapunov import (
    certify,
    certify_problem,
    check_cost_domination,
    evaluate_LV,
    fit_envelope,
    lyapunov_terms,
)
from domain.operator import build_quadrature
from domain.problem import LyapunovData, constant_cost_problem, example_1_1_problem

GAMMA, THETA, S = 1.6, 0.1, 0.9


def _zeros(x):
    return np.zeros(x.shape[:-1])


def _zero_vectors(x):
    return np.zeros_like(x)


def _zero_matrices(x):
    return np.zeros((*x.shape, x.shape[-1]))


@pytest.fixture(scope="module")
def example_setting():
    p = example_1_1_problem(GAMMA, THETA, 1, S)
    grid = build_grid(1, 0.25, 32.0)
    q = build_quadrature(grid, S, grid.radius + 1.0)
    return p, grid, q


def test_example_is_certified(example_setting):
    p, grid, q = example_setting
    cert = certify(p, grid, q)

    assert cert.passed
    assert cert.violations == ()
    assert cert.k0 > 0.0
    assert cert.k1 > 0.0
    assert cert.fit == "slope"
    assert cert.tail_mode == "closed-form"
    assert cert.exponent == pytest.approx(THETA + GAMMA - 1.0)
    assert np.all(cert.values <= cert.k0 - cert.k1 * grid.norms**cert.exponent + 1e-9)


def test_flipped_drift_has_no_envelope():
    p = example_1_1_problem(GAMMA, THETA, 1, S, outward=True)
    grid = build_grid(1, 0.25, 32.0)
    q = build_quadrature(grid, S, grid.radius + 1.0)
    cert = certify(p, grid, q)
    assert not cert.passed
    assert cert.fit == "failed"
    assert all(v.margin < 0.0 for v in cert.violations)


def test_drift_term_matches_closed_form(example_setting):
    p, grid, q = example_setting
    terms = lyapunov_terms(p, grid, q, "base")
    far = grid.norms >= 1.0
    expected = -GAMMA * grid.norms[far] ** (THETA + GAMMA - 1.0)
    np.testing.assert_allclose(terms.drift[far], expected, rtol=1e-12)
    np.testing.assert_array_equal(terms.local, 0.0)


def test_jump_term_scales_like_power(example_setting):
    p, grid, q = example_setting
    jump = lyapunov_terms(p, grid, q, "base").jump
    idx = grid.nearest_index(np.array([[8.0], [16.0], [32.0]]))
    ratios = jump[idx] / grid.norms[idx] ** (GAMMA - 2.0 * S)
    assert np.all(np.isfinite(ratios))
    assert np.all(np.sign(ratios) == np.sign(ratios[0]))
    assert np.max(np.abs(ratios)) <= 2.0 * np.min(np.abs(ratios))


def test_zero_lyapunov_function_gives_zero():
    p = constant_cost_problem(1.0, 1, 0.75)
    lyap = LyapunovData(V=_zeros, grad=_zero_vectors, hessian=_zero_matrices, h=_zeros, k0=1.0)
    grid = build_grid(1, 0.25, 4.0)
    q = build_quadrature(grid, 0.75, grid.radius + 1.0)
    values = evaluate_LV(p.with_lyapunov(lyap), grid, q)
    np.testing.assert_array_equal(values, 0.0)


def test_fit_envelope_on_constant_negative_field():
    grid = build_grid(1, 0.25, 4.0)
    lyap = LyapunovData(
        V=_zeros,
        grad=_zero_vectors,
        hessian=_zero_matrices,
        h=_zeros,
        k0=1.0,
        envelope_exponent=1.0,
    )
    cert = fit_envelope(np.full(grid.n, -1.0), lyap, grid)
    assert cert.passed
    assert cert.fit == "max-compatible"
    assert cert.k1 == pytest.approx(1.0 / 4.0)
    assert cert.k0 == pytest.approx(1e-12, abs=1e-12)


def test_fit_envelope_needs_an_exponent():
    grid = build_grid(1, 0.25, 4.0)
    lyap = LyapunovData(V=_zeros, grad=_zero_vectors, hessian=_zero_matrices, h=_zeros, k0=1.0)
    with pytest.raises(MissingLyapunovDataError):
        fit_envelope(np.zeros(grid.n), lyap, grid)


def test_certify_problem_installs_the_fitted_envelope(example_setting):
    p, grid, q = example_setting
    certified, cert = certify_problem(p, grid, q)
    lyap = certified.lyapunov
    assert lyap is not None and lyap.certified
    assert lyap.k0 == cert.k0
    assert lyap.k1 == cert.k1

    doc = cert.to_document(p.name, exponents={"gamma": GAMMA, "s": S}, r_far=q.far_radius)
    assert doc.violations == []
    assert doc.grid.nodes == grid.n
    assert doc.envelope.k0 == cert.k0


def test_cost_is_dominated_by_envelope(example_setting):
    p, grid, _ = example_setting
    report = check_cost_domination(p, grid)
    assert report.passed
    assert report.decreasing
    assert report.max_ratio < 1.0


def test_missing_lyapunov_data_is_reported():
    p = constant_cost_problem(1.0, 1, 0.75)
    grid = build_grid(1, 0.25, 4.0)
    q = build_quadrature(grid, 0.75, grid.radius + 1.0)
    with pytest.raises(MissingLyapunovDataError):
        certify(p, grid, q)
    with pytest.raises(MissingLyapunovDataError):
        check_cost_domination(p, grid)
