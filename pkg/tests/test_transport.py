import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from raddiff.errors import InvalidArgumentError
from raddiff.mesh import Mesh1D, build_mesh, moment
from raddiff.transport import InflowData, TransportSweeper, half_space_sweep, sweep


@pytest.mark.parametrize("eps", [0.1, 0.01])
def test_zero_source_matches_closed_form(quad, eps):
    mesh = build_mesh(101, 60, eps, grading="layer_graded")
    psi = sweep(eps, 0.0, InflowData.constant(quad, 1.0, 0.0), mesh, quad)
    x = mesh.nodes[:, None]
    mu = quad.mu[quad.pos][None, :]
    np.testing.assert_allclose(psi[:, quad.pos], np.exp(-x / (eps * mu)), atol=1e-10, rtol=0)
    assert np.all(psi[:, quad.neg] == 0)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.5, 2.0), st.floats(-1.0, 1.0), st.floats(0.01, 0.5))
def test_linear_source_is_reproduced_exactly(quad, a, b, eps):
    # psi = a + b x - eps mu b solves eps mu psi' + psi = a + b x
    mesh = Mesh1D(np.sort(np.concatenate([[0.0, 1.0], np.linspace(0.013, 0.97, 37) ** 1.7])))
    x = mesh.nodes
    exact = a + b * x[:, None] - eps * quad.mu[None, :] * b
    inflow = InflowData(exact[0, quad.pos], exact[-1, quad.neg])
    psi = sweep(eps, a + b * x, inflow, mesh, quad)
    np.testing.assert_allclose(psi, exact, atol=1e-12)


def test_equilibrium_is_fixed(quad):
    mesh = Mesh1D(np.linspace(0, 1, 31))
    psi = sweep(0.05, 2.0, InflowData.constant(quad, 2.0, 2.0), mesh, quad)
    np.testing.assert_allclose(psi, 2.0, atol=1e-14)


def test_moment_operator_matches_sweep(quad):
    mesh = Mesh1D(np.linspace(0, 3, 25) ** 1.3)
    sw = TransportSweeper(0.3, mesh, quad)
    K = sw.moment_operator()
    rng = np.random.default_rng(0)
    S = rng.normal(size=mesh.n)
    zero = InflowData.constant(quad, 0.0, 0.0)
    np.testing.assert_allclose(K @ S, moment(sw.sweep(S, zero), quad), atol=1e-13)
    Kh = sw.moment_operator(half_space=True)
    np.testing.assert_allclose(Kh @ S, moment(sw.half_space(S, InflowData.constant(quad, 0.0)), quad), atol=1e-13)


def test_half_space_constant_state(quad):
    mesh = Mesh1D(np.linspace(0, 20, 101))
    psi = half_space_sweep(3.0, InflowData.constant(quad, 3.0), mesh, quad)
    np.testing.assert_allclose(psi, 3.0, atol=1e-13)


def test_inflow_shape_checked(quad):
    mesh = Mesh1D(np.linspace(0, 1, 5))
    with pytest.raises(InvalidArgumentError):
        sweep(0.1, 0.0, InflowData(np.ones(3), np.ones(8)), mesh, quad)
