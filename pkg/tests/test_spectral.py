import json

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from raddiff.errors import InternalError, InvalidArgumentError
from raddiff.expansion import CutoffSpec, assemble_composite, auto_delta, composite_mesh, construct
from raddiff.mesh import Mesh1D
from raddiff.milne import MilneDiscretization, milne_mesh, solve_nonlinear_milne
from raddiff.spectral import (
    check_coercivity,
    check_spectral,
    coercivity_constant,
    coercivity_forms,
    spectral_forms,
)


def dense_top_eigenvalue(T, tau, mesh):
    A, B = spectral_forms(T, tau, mesh)
    Bd = np.diag(B[1]) + np.diag(B[0, 1:], 1) + np.diag(B[0, 1:], -1)
    return scipy.linalg.eigh(np.diag(A), Bd, eigvals_only=True)[-1]


def coarse_mesh(n=200, L=20.0):
    return Mesh1D(np.linspace(0.0, L, n))


def test_steep_profile_matches_dense_oracle():
    mesh = coarse_mesh()
    T = 0.1 + 5 * np.exp(-3 * mesh.nodes)
    rep = check_spectral(T, 0.1, mesh, lam=3.0)
    assert rep.M_star == pytest.approx(dense_top_eigenvalue(T, 0.1, mesh), rel=1e-8, abs=1e-12)
    assert not rep.passed
    assert rep.profile[0] == 0.0 and np.max(np.abs(rep.profile)) == pytest.approx(1.0)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.05, 0.95), st.floats(0.3, 3.0), st.floats(0.01, 0.25))
def test_iterative_matches_dense_for_rising_profiles(amp, rate, frac):
    mesh = coarse_mesh(150)
    T = 1.0 - amp * np.exp(-rate * mesh.nodes)
    tau = frac * rate
    rep = check_spectral(T, tau, mesh, lam=rate)
    ref = dense_top_eigenvalue(T, tau, mesh)
    assert rep.M_star == pytest.approx(ref, rel=1e-8)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.01, 100.0))
def test_scale_covariance(alpha):
    mesh = coarse_mesh()
    T = 0.1 + 5 * np.exp(-3 * mesh.nodes)
    a = check_spectral(T, 0.1, mesh, lam=3.0).M_star
    b = check_spectral(alpha * T, 0.1, mesh, lam=3.0).M_star
    assert abs(a - b) <= 1e-10 * max(1.0, a)


def test_constant_profile_gives_zero():
    mesh = coarse_mesh()
    rep = check_spectral(np.full(mesh.n, 1.7), 0.3, mesh)
    assert rep.M_star == 0.0 and rep.passed


def test_tau_at_or_above_decay_rate_rejected():
    mesh = coarse_mesh()
    T = 1 - 0.5 * np.exp(-mesh.nodes)
    with pytest.raises(InvalidArgumentError):
        check_spectral(T, 1.0, mesh, lam=1.0)
    with pytest.raises(InvalidArgumentError):
        check_spectral(T, 2.0, mesh)
    with pytest.raises(InvalidArgumentError):
        check_spectral(T, 0.0, mesh, lam=1.0)


def test_benchmark_profile_is_mesh_stable(bench_milne, disc, quad, tmp_path):
    lam = bench_milne.decay_rate
    rep = check_spectral(bench_milne.T, lam / 2, disc.mesh, lam=lam)
    fine = MilneDiscretization(milne_mesh(h_bulk=0.025, n_layer=800), quad)
    m2 = solve_nonlinear_milne(1.0, 1.5, disc=fine)
    rep2 = check_spectral(m2.T, lam / 2, fine.mesh, lam=m2.decay_rate)
    assert abs(rep.M_star - rep2.M_star) < 1e-4
    assert rep.passed
    rep.write_json(tmp_path / "s.json")
    data = json.load(open(tmp_path / "s.json"))
    assert data["M_star"] == rep.M_star and data["passed"] is True


def test_coercivity_constant_profile():
    x = np.linspace(0, 1, 60)
    c = 1.3
    Q, S, N = coercivity_forms(np.full(x.size, c), x)
    np.testing.assert_allclose(Q, 4 * c**3 * S, rtol=1e-14)
    rep = coercivity_constant(np.full(x.size, c), x)
    assert rep.kappa == pytest.approx(2 * c**3)
    assert rep.C == 0.0 and rep.rho > 0 and rep.passed


def test_coercivity_forms_symmetric():
    x = np.linspace(0, 1, 40) ** 1.4
    Q, S, N = coercivity_forms(1 + np.sin(3 * x), x)
    assert np.max(np.abs(Q - Q.T)) == 0.0
    assert np.all(np.linalg.eigvalsh(N) > 0)


def test_coercivity_asymmetry_is_an_internal_error(monkeypatch):
    import raddiff.spectral as spectral

    def broken(T, x):
        Q, S, N = coercivity_forms(T, x)
        Q[0, 1] += 1.0
        return Q, S, N

    monkeypatch.setattr(spectral, "coercivity_forms", broken)
    with pytest.raises(InternalError):
        spectral.coercivity_constant(np.full(20, 1.0), np.linspace(0, 1, 20))


def test_failing_layer_profile_makes_C_grow_like_inverse_square():
    # this layer shape violates the spectral assumption (M* >> 1)
    mesh = coarse_mesh()
    assert check_spectral(1 - 0.9 * np.exp(-3 * mesh.nodes), 0.1, mesh, lam=3.0).M_star > 1
    x = np.linspace(0, 1, 1201)
    C = [coercivity_constant(1 - 0.9 * np.exp(-3 * x / e), x).C for e in (0.05, 0.025, 0.0125)]
    for a, b in zip(C, C[1:]):
        assert 3.0 < b / a < 5.0


def test_well_prepared_composite_C_bounded(disc):
    c = construct(0, 1.0, 1.2, 1.0, disc=disc)
    Cs = []
    for eps in (0.1, 0.05, 0.025):
        ap = assemble_composite(0, eps, c, CutoffSpec(auto_delta(eps, 0, 1.0, c.L_eta)), composite_mesh(eps, disc))
        rep = check_coercivity(ap, eps, n_eigen=3)
        assert rep.passed and len(rep.eigenvalues) == 3
        Cs.append(rep.C)
    assert max(Cs) <= 2 * min(Cs) + 1e-12
