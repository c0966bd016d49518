import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from raddiff.errors import InvalidArgumentError, SolverFailure, UnsupportedOrderError
from raddiff.expansion import (
    N_MAX,
    CutoffSpec,
    InteriorExpansion,
    assemble_composite,
    auto_delta,
    build_interior,
    build_taylor,
    composite_mesh,
    compositions,
    construct,
    delta_bound,
    delta_limit,
    evaluate_residuals,
    quartic_products,
    quartic_remainder,
)

K = 4 * math.pi / 3


def test_composition_counts():
    assert len(compositions(4)) == 35
    for k in range(8):
        assert len(compositions(k)) == math.comb(k + 3, 3)
        assert len(compositions(k, minimum=1)) == (math.comb(k - 1, 3) if k >= 4 else 0)


@settings(max_examples=20, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=5, max_size=5))
def test_quartic_products_match_symbolic_expansion(T):
    e = sp.symbols("e")
    poly = sp.Poly(sum(sp.Float(t, 30) * e**i for i, t in enumerate(T)) ** 4, e)
    for k in range(5):
        C, _ = quartic_products(T, k)
        assert float(C) == pytest.approx(float(poly.coeff_monomial(e**k)), rel=1e-12, abs=1e-12)
        if k >= 1:
            assert float(quartic_remainder(T, k)) == pytest.approx(float(C) - 4 * T[0] ** 3 * T[k], abs=1e-11)


def test_quartic_remainder_ignores_current_order():
    T = [1.2, -0.4, 0.3]
    assert quartic_remainder(T[:2], 2) == pytest.approx(quartic_remainder(T, 2))


@pytest.fixture(scope="module")
def interior(quad):
    return build_interior(2, [1.0852, 0.31, -0.2], 0.9, quad)


def test_interior_order_one_closed_form(interior):
    # odd angular moments vanish, so T_1 + 4K T_0^3 T_1 is linear with T_1(1) = 0
    x = interior.x
    kap = 1 + 4 * K * interior.T[0] ** 3
    expected = kap[0] * 0.31 * (1 - x) / kap
    np.testing.assert_allclose(interior.T[1], expected, atol=1e-10)


def test_interior_boundary_values(interior):
    assert interior.T[0][0] == 1.0852 and interior.T[0][-1] == 0.9
    for k in (1, 2):
        assert interior.T[k][-1] == 0.0
    assert interior.T[2][0] == -0.2


def test_interior_equations_hold(interior):
    # T_0 is inverted to 1e-12; the second difference amplifies that by 1/h^2
    for k in range(3):
        scale = max(1.0, np.max(np.abs(interior.T[k])))
        assert np.max(np.abs(interior.equation_residual(k))) < 1e-6 * scale


def test_taylor_coefficients_match_implicit_derivatives(interior):
    # T_0 solves T + K T^4 = u(x), u linear: differentiate implicitly
    x, du = sp.symbols("x du")
    Tf = sp.Function("T")(x)
    d1 = sp.solve(sp.Eq(sp.diff(Tf + K * Tf**4, x), du), sp.diff(Tf, x))[0]
    d2 = sp.diff(d1, x).subs(sp.diff(Tf, x), d1)
    t0 = 1.0852
    slope = (0.9 + K * 0.9**4) - (t0 + K * t0**4)
    v1 = float(d1.subs({Tf: t0, du: slope}))
    v2 = float(d2.subs({Tf: t0, du: slope}))
    P = build_taylor(interior, 2)
    assert P.coeffs[2] == pytest.approx(v2 / 2, rel=1e-6)
    P1 = build_taylor(interior, 1)
    assert P1.coeffs == pytest.approx((0.31, v1), rel=1e-7)
    q = build_taylor(interior, 2, include_constant=False)
    assert q(0.0) == 0.0
    assert q.derivative()(0.0) == pytest.approx(P.coeffs[1])


def test_unresolved_derivatives_are_reported(quad):
    with pytest.raises(SolverFailure, match="not resolved"):
        build_interior(2, [1.0852, 0.31, -0.2], 0.7, quad, n_aux=401)


def test_order_above_maximum(quad):
    with pytest.raises(UnsupportedOrderError):
        build_interior(N_MAX + 1, [1.0] * (N_MAX + 2), 1.0, quad)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.01, 2.0))
def test_cutoff_shape(delta):
    c = CutoffSpec(delta)
    x = np.linspace(0, delta, 2001)
    chi = c.chi(x)
    assert np.all(chi[x <= delta / 4] == 1.0)
    assert np.all(chi[x >= 3 * delta / 8] == 0.0)
    assert np.all(np.diff(chi) <= 1e-15)
    b1, b2 = c.derivative_bounds()
    assert np.max(np.abs(c.chi(x, 1))) <= b1 * (1 + 1e-9)
    assert np.max(np.abs(c.chi(x, 1))) == pytest.approx(b1, rel=1e-3)
    assert np.max(np.abs(c.chi(x, 2))) <= b2 * (1 + 1e-9)


def test_cutoff_derivative_matches_differences():
    c = CutoffSpec(0.8)
    x = np.linspace(0.0, 0.8, 4001)
    np.testing.assert_allclose(np.gradient(c.chi(x), x), c.chi(x, 1), atol=2e-3)


def test_auto_delta_rule():
    eps, N, lam = 0.05, 1, 1.0
    d = auto_delta(eps, N, lam, 60.0)
    assert d > delta_bound(eps, N, lam)
    assert d <= delta_limit(eps, 60.0)
    assert d == pytest.approx(min(1.5 * (-(4 / lam) * 2 * eps * math.log(eps)), 8 / 3))
    with pytest.raises(InvalidArgumentError):
        auto_delta(0.3, 3, 1.0, 60.0)


def test_composite_mesh_reuses_milne_nodes(disc):
    eps = 0.01
    mesh = composite_mesh(eps, disc)
    inner = mesh.nodes[mesh.nodes < eps * disc.eta[-1] - 1e-12]
    np.testing.assert_array_equal(inner, eps * disc.eta[: inner.size])
    assert mesh.nodes[-1] == 1.0


def test_constant_data_gives_exact_composite(disc):
    c = construct(1, 1.0, 1.0, 1.0, disc=disc)
    eps = 0.1
    ap = assemble_composite(1, eps, c, CutoffSpec(auto_delta(eps, 1, c.decay_rate, c.L_eta)),
                            composite_mesh(eps, disc))
    np.testing.assert_allclose(ap.T_a, 1.0, atol=1e-12)
    res = evaluate_residuals(ap)
    assert res.norms["R1_sup"] < 1e-9 and res.norms["R2_sup"] < 1e-9


def test_delta_below_bound_rejected(disc):
    c = construct(0, 1.0, 1.2, 1.5, disc=disc)
    eps = 0.05
    with pytest.raises(InvalidArgumentError):
        assemble_composite(0, eps, c, CutoffSpec(0.5 * delta_bound(eps, 0, c.decay_rate)), composite_mesh(eps, disc))


def test_far_field_relations(disc):
    c = construct(1, 1.0, 1.2, 1.5, disc=disc)
    m0, m1 = c.milne
    assert m0.relation_defect < 1e-6
    np.testing.assert_allclose(m1.psi_inf, 4 * m0.T_inf**3 * m1.T_inf, atol=1e-6)
    assert c.interior.T[1][0] == m1.T_inf


def test_exact_and_centered_residuals_agree(disc):
    c = construct(0, 1.0, 1.2, 1.5, disc=disc)
    eps = 0.1
    ap = assemble_composite(0, eps, c, CutoffSpec(auto_delta(eps, 0, c.decay_rate, c.L_eta)),
                            composite_mesh(eps, disc, n_bulk=801))
    ex = evaluate_residuals(ap, "exact").norms["R2_sup"]
    ce = evaluate_residuals(ap, "centered").norms["R2_sup"]
    assert ce == pytest.approx(ex, rel=0.05)


def test_interior_rejects_bad_grid(quad):
    with pytest.raises(InvalidArgumentError):
        InteriorExpansion(1.0, 1.0, quad, n_aux=100)
