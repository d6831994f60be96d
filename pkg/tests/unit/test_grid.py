from __future__ import annotations

import numpy as np
import pytest
from domain.errors import InvalidGridError
from domain.grid import ExteriorRule, build_grid, evaluate_extended, extend
from hypothesis import given
from hypothesis import strategies as st


def test_one_dimensional_counting():
    g = build_grid(1, 1.0, 2.0, min_cells=1)
    assert g.nodes[:, 0].tolist() == [-2.0, -1.0, 0.0, 1.0, 2.0]
    assert g.nodes[g.origin_index, 0] == 0.0

    g = build_grid(1, 0.5, 1.0, min_cells=1)
    assert g.n == 5
    np.testing.assert_array_equal(np.sort(g.nodes[:, 0]), np.sort(-g.nodes[:, 0]))


def test_two_dimensional_counting_matches_enumeration():
    g = build_grid(2, 1.0, 1.5, min_cells=1)
    brute = {
        (i, j) for i in range(-2, 3) for j in range(-2, 3) if i * i + j * j <= 1.5**2
    }
    assert g.n == 9
    assert {tuple(int(v) for v in row) for row in g.index} == brute


def test_origin_is_a_node_and_ordering_is_lexicographic():
    g = build_grid(2, 0.25, 1.0)
    assert np.all(g.nodes[g.origin_index] == 0.0)
    keys = [tuple(row) for row in g.index.tolist()]
    assert keys == sorted(keys)


@pytest.mark.parametrize(
    "d,hx,R",
    [(3, 0.5, 4.0), (1, 0.0, 4.0), (1, -1.0, 4.0), (1, 1.0, 3.0), (2, 0.5, 1.9)],
)
def test_rejects_bad_parameters(d, hx, R):
    with pytest.raises(InvalidGridError):
        build_grid(d, hx, R)


@given(
    d=st.sampled_from([1, 2]),
    hx=st.sampled_from([0.125, 0.25, 0.5, 1.0]),
    cells=st.integers(min_value=4, max_value=12),
)
def test_node_index_round_trip(d, hx, cells):
    g = build_grid(d, hx, cells * hx)
    np.testing.assert_array_equal(g.nearest_index(g.nodes), np.arange(g.n))
    assert np.all(g.norms <= g.radius * (1.0 + 1e-12))


def test_identical_parameters_give_identical_grids():
    a = build_grid(2, 0.25, 2.0)
    b = build_grid(2, 0.25, 2.0)
    np.testing.assert_array_equal(a.index, b.index)
    assert a.origin_index == b.origin_index


def test_evaluate_extended_examples():
    g = build_grid(1, 1.0, 4.0)
    u = np.zeros(g.n)
    node = int(g.nearest_index(np.array([[2.0]]))[0])
    u[node] = 3.7
    assert evaluate_extended(g, u, ExteriorRule.zero(), 2.0) == 3.7
    assert evaluate_extended(g, u, ExteriorRule.zero(), 5.0) == 0.0

    rule = ExteriorRule.function(lambda x: np.abs(x[..., 0]) ** 0.9)
    assert evaluate_extended(g, u, rule, 5.0) == pytest.approx(5.0**0.9, rel=1e-15)


def test_extend_is_identity_on_nodes():
    g = build_grid(2, 0.5, 3.0)
    u = np.random.default_rng(3).normal(size=g.n)
    for rule in (ExteriorRule.zero(), ExteriorRule.nearest(), ExteriorRule.constant(2.0)):
        np.testing.assert_array_equal(extend(g, u, rule, g.nodes), u)


def test_nearest_rule_uses_radial_projection():
    g = build_grid(1, 0.5, 2.0)
    u = g.nodes[:, 0] ** 2
    pts = np.array([[7.0], [-3.25]])
    np.testing.assert_array_equal(extend(g, u, ExteriorRule.nearest(), pts), [4.0, 4.0])

    g2 = build_grid(2, 0.5, 2.0)
    u2 = np.arange(g2.n, dtype=float)
    far = np.array([[10.0, 0.0]])
    edge = int(g2.nearest_index(np.array([[2.0, 0.0]]))[0])
    assert extend(g2, u2, ExteriorRule.nearest(), far)[0] == u2[edge]


def test_nearest_rule_has_no_direct_values():
    with pytest.raises(ValueError):
        ExteriorRule.nearest().values(np.zeros((1, 1)))
