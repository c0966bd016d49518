import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq

from raddiff.elliptic import (
    DirichletBC,
    invert_quartic_map,
    solve_limit_equation,
    solve_nonlinear_temperature,
    solve_reaction_diffusion,
)
from raddiff.errors import InvalidArgumentError
from raddiff.mesh import Mesh1D, build_mesh

K = 4 * math.pi / 3


@settings(max_examples=60, deadline=None)
@given(st.floats(0.0, 1e4))
def test_quartic_inversion_matches_brentq(u):
    t = invert_quartic_map(np.array([u]))[0]
    ref = brentq(lambda s: s + K * s**4 - u, 0.0, max(u, 1e-300), xtol=1e-15) if u > 0 else 0.0
    assert t == pytest.approx(ref, rel=1e-12, abs=1e-15)


def test_quartic_inversion_rejects_negative():
    with pytest.raises(InvalidArgumentError):
        invert_quartic_map(np.array([-1.0]))


@settings(max_examples=30, deadline=None)
@given(st.floats(0.0, 3.0), st.floats(0.0, 3.0))
def test_limit_equation_forward_map_is_linear(tl, tr):
    mesh = build_mesh(201, 30, 0.05, grading="layer_graded")
    T = solve_limit_equation(DirichletBC(tl, tr), mesh)
    u = T + K * T**4
    x = mesh.nodes
    line = u[0] + (u[-1] - u[0]) * x
    assert np.max(np.abs(u - line)) < 1e-10 * max(1.0, abs(u).max())


def test_reaction_diffusion_exact_for_quadratics():
    mesh = Mesh1D(np.linspace(0, 1, 23) ** 1.5)
    x = mesh.nodes
    a, c = 0.7, 2.0 + x
    u = 1.0 + 0.5 * x - 0.8 * x**2
    f = a * (-1.6) - c * u
    got = solve_reaction_diffusion(a, c, f, DirichletBC(u[0], u[-1]), mesh)
    np.testing.assert_allclose(got, u, atol=1e-12)


def test_reaction_diffusion_neumann():
    mesh = Mesh1D(np.linspace(0, 2, 401))
    x = mesh.nodes
    # u = cosh(L - x) / cosh(L) solves u'' - u = 0, u(0) = 1, u'(L) = 0
    u = np.cosh(2 - x) / np.cosh(2)
    got = solve_reaction_diffusion(1.0, 1.0, 0.0, DirichletBC(1.0, 0.0), mesh, right="neumann")
    assert np.max(np.abs(got - u)) < 1e-4


def test_nonlinear_temperature_manufactured():
    # quadratic theta is reproduced exactly by the three-point scheme
    eps = 0.1
    mesh = Mesh1D(np.linspace(0, 1, 41) ** 1.2)
    x = mesh.nodes
    th = 1.0 + x - 0.5 * x**2
    m = 4 * math.pi * th**4 - eps**2 * (-1.0)
    got, trace = solve_nonlinear_temperature(eps, m, DirichletBC(th[0], th[-1]), mesh, full_output=True)
    np.testing.assert_allclose(got, th, atol=1e-11)
    assert trace[-1] < 1e-12


def test_nonlinear_temperature_equilibrium():
    mesh = Mesh1D(np.linspace(0, 1, 11))
    got = solve_nonlinear_temperature(0.05, 4 * math.pi * 2.0**4, DirichletBC(2.0, 2.0), mesh)
    np.testing.assert_allclose(got, 2.0, atol=1e-13)
