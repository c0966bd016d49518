import csv
import math

import numpy as np
import pytest

from raddiff.elliptic import DirichletBC
from raddiff.errors import InvalidArgumentError
from raddiff.expansion import CutoffSpec, assemble_composite, auto_delta, composite_mesh, construct
from raddiff.mesh import Mesh1D, apply_laplacian, build_mesh, moment
from raddiff.fullsolver import (
    error_norms,
    linearized_solve,
    solve_contraction,
    solve_picard,
    write_solution_csv,
)
from raddiff.transport import InflowData, TransportSweeper


@pytest.fixture(scope="module")
def bench(disc):
    c = construct(0, 1.0, 1.2, 1.5, disc=disc)
    eps = 0.1
    ap = assemble_composite(0, eps, c, CutoffSpec(auto_delta(eps, 0, c.decay_rate, c.L_eta)),
                            composite_mesh(eps, disc))
    return eps, ap, DirichletBC(1.0, 1.2), InflowData.constant(disc.quad, 1.5, 1.2**4)


@pytest.mark.parametrize("method", ["gmres", "source_iteration"])
def test_linearized_solve_recovers_discrete_solution(quad, method):
    eps = 0.2
    mesh = build_mesh(81, 20, eps, grading="layer_graded")
    x = mesh.nodes
    Ta = 1.0 + 0.3 * x
    w = 4 * Ta**3
    g_star = np.sin(math.pi * x) * (1 + x)
    r2 = 0.1 * np.cos(3 * x)[:, None] * quad.mu[None, :]
    sw = TransportSweeper(eps, mesh, quad)
    zero = InflowData(np.zeros(quad.m // 2), np.zeros(quad.m // 2))
    phi_star = sw.sweep(w[:, None] * g_star[:, None] + r2, zero)
    r1 = np.zeros(mesh.n)
    r1[1:-1] = eps**2 * apply_laplacian(g_star, x) + moment(phi_star[1:-1], quad) - 4 * math.pi * (w * g_star)[1:-1]
    got = linearized_solve(eps, Ta, r1, r2, 0.0, mesh, quad, tol=1e-13, method=method)
    np.testing.assert_allclose(got.g, g_star, atol=1e-10)
    np.testing.assert_allclose(got.phi, phi_star, atol=1e-10)
    assert got.boundary_defect(quad) < 1e-12


def test_linearized_solve_rejects_nonpositive_temperature(quad):
    mesh = Mesh1D(np.linspace(0, 1, 11))
    with pytest.raises(InvalidArgumentError):
        linearized_solve(0.1, np.zeros(11), 0.0, 0.0, 0.0, mesh, quad)


@pytest.mark.parametrize("eps", [0.1, 0.05])
def test_equilibrium_is_exact(quad, disc, eps):
    Tb = DirichletBC(1.0, 1.0)
    inflow = InflowData.constant(quad, 1.0, 1.0)
    mesh = composite_mesh(eps, disc)
    T, psi, rep = solve_picard(eps, Tb, inflow, mesh, quad)
    assert np.max(np.abs(T - 1)) < 1e-9 and np.max(np.abs(psi - 1)) < 1e-9
    c = construct(0, 1.0, 1.0, 1.0, disc=disc)
    ap = assemble_composite(0, eps, c, CutoffSpec(auto_delta(eps, 0, 1.0, c.L_eta)), mesh)
    T, psi, rep = solve_contraction(eps, ap, Tb, inflow)
    assert np.max(np.abs(T - 1)) < 1e-9 and np.max(np.abs(psi - 1)) < 1e-9


def test_picard_and_contraction_agree(bench, quad):
    eps, ap, Tb, inflow = bench
    Tc, pc, rc = solve_contraction(eps, ap, Tb, inflow)
    Tp, pp, rp = solve_picard(eps, Tb, inflow, ap.mesh, quad, T_init=ap.T_a)
    assert np.max(np.abs(Tc - Tp)) < 1e-8
    assert np.max(np.abs(pc - pp)) < 1e-7
    assert rc.residual_psi < 1e-9 and rp.residual_psi < 1e-9
    assert all(r < 1 for r in rc.ratios)
    # maximum principle: T between the wall and inflow temperatures
    assert rp.bounds_ok


def test_error_norms(bench):
    eps, ap, _, _ = bench
    T, psi = ap.truncated(0)
    zero = error_norms(T, psi, ap)
    assert all(v == 0.0 for v in zero.values())
    no_layer = error_norms(T, psi, ap, with_layer=False)
    assert no_layer["sup_T"] == pytest.approx(np.max(np.abs(ap.T_bar[0])))


def test_solution_csv(bench, tmp_path, quad):
    eps, ap, _, _ = bench
    T, psi = ap.truncated()
    p = tmp_path / "s.csv"
    write_solution_csv(p, ap.mesh, T, psi, quad, kinetic=True)
    rows = list(csv.reader(open(p, newline="")))
    assert len(rows[0]) == 3 + quad.m
    assert len(rows) == ap.mesh.n + 1
    assert open(p, "rb").read().count(b"\r") == 0
