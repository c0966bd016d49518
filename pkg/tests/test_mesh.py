import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from raddiff.errors import InvalidArgumentError
from raddiff.mesh import (
    Mesh1D,
    apply_laplacian,
    build_mesh,
    central_derivative,
    gauss_quadrature,
    moment,
    trapezoid,
)


def test_quadrature_moments(quad):
    # <1> = 4 pi, <mu> = 0, <mu^2> = 4 pi / 3 with <f> = 2 pi sum w f
    assert moment(np.ones(quad.m), quad) == pytest.approx(4 * math.pi, rel=1e-14)
    assert abs(moment(quad.mu, quad)) < 1e-14
    assert moment(quad.mu**2, quad) == pytest.approx(4 * math.pi / 3, rel=1e-14)


@pytest.mark.parametrize("n", [1, 2, 4, 8])
def test_quadrature_is_exact_up_to_degree(n):
    q = gauss_quadrature(n)
    for p in range(0, 4 * n):
        exact = 2.0 / (p + 1) if p % 2 == 0 else 0.0
        assert 2 * math.pi * np.sum(q.weights * q.mu**p) == pytest.approx(2 * math.pi * exact, abs=1e-13)


def test_quadrature_halves(quad):
    assert np.all(quad.mu[quad.pos] > 0)
    assert np.all(quad.mu[quad.neg] < 0)
    np.testing.assert_allclose(np.sort(quad.mu[quad.pos]), np.sort(-quad.mu[quad.neg]), atol=1e-15)


def test_mesh_rejects_unsorted_nodes():
    with pytest.raises(InvalidArgumentError):
        Mesh1D(np.array([0.0, 0.5, 0.4, 1.0]))


def test_layer_graded_mesh_resolves_layer():
    eps = 0.01
    m = build_mesh(201, 40, eps, grading="layer_graded")
    assert m.nodes[0] == 0.0 and m.nodes[-1] == 1.0
    assert np.all(np.diff(m.nodes) > 0)
    assert m.count_in(0.0, 5 * eps) >= 40
    assert np.max(m.widths) <= 1.0 / 200 * (1 + 1e-9)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0.05, 1.0), min_size=4, max_size=30), st.floats(-3, 3), st.floats(-3, 3))
def test_difference_operators_exact_for_quadratics(widths, b, c):
    x = np.concatenate([[0.0], np.cumsum(widths)])
    u = 1.0 + b * x + c * x**2
    np.testing.assert_allclose(apply_laplacian(u, x), 2 * c, atol=1e-8 * max(1.0, x[-1] ** 2))
    np.testing.assert_allclose(central_derivative(u, x), b + 2 * c * x, atol=1e-8 * max(1.0, x[-1] ** 2))


def test_trapezoid_linear():
    x = np.linspace(0, 2, 7)
    assert trapezoid(3 * x + 1, x) == pytest.approx(8.0)
