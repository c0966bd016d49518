"""Interior expansion, layer correctors and the composite approximation.

Interior terms live on a uniform auxiliary grid on ``[0, 1]`` where
derivatives are taken with fourth-order differences; the kinetic terms are
kept as polynomials in ``mu``,

    psi_k(x, mu) = sum_l a[k][l](x) mu**l,
    a[k][0] = C(T, k),   a[k][l + 1] = -a[k - 1][l]',

which is the recursion ``psi_k = -mu psi_{k-1}' + C(T, k)`` written per
power of ``mu``. Layer terms are Milne profiles in ``eta = x / eps``.
"""

from __future__ import annotations

import csv
import itertools
import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np
from scipy.interpolate import CubicSpline

from .elliptic import DirichletBC, solve_limit_equation, solve_reaction_diffusion
from .errors import InvalidArgumentError, SolverFailure, UnsupportedOrderError
from .mesh import AngularQuadrature, Mesh1D, apply_laplacian, central_derivative, moment, trapezoid
from .milne import (EXACT, LayerSources, MilneDiscretization, MilneSolution, solve_linear_milne,
                    solve_nonlinear_milne)
from .transport import InflowData

log = logging.getLogger(__name__)

N_MAX = 3
FOUR_PI = 4.0 * math.pi
FOUR_PI_THIRD = FOUR_PI / 3.0


# ---------------------------------------------------------------------------
# quartic coefficient products


@lru_cache(maxsize=None)
def compositions(k, parts=4, minimum=0):
    """Ordered tuples of ``parts`` integers ``>= minimum`` summing to ``k``."""
    return tuple(c for c in itertools.product(range(minimum, k + 1), repeat=parts) if sum(c) == k)


def _product_sum(T_list, combos):
    out = 0.0
    for c in combos:
        term = 1.0
        for i in c:
            term = term * T_list[i]
        out = out + term
    return out


def quartic_products(T_list: Sequence, k: int):
    """Coefficients of ``eps**k`` in ``(sum eps**i T_i)**4``.

    Returns
    -------
    C : array
        ``sum_{i+j+l+m=k} T_i T_j T_l T_m``.
    E : array
        The same sum over ``k - 1`` with every index ``>= 1``; zero when
        ``k - 1 < 4``. Kept for reference only: the recursion needs the
        remainder ``C(T, k) - 4 T_0**3 T_k``, see :func:`quartic_remainder`.
    """
    if k < 0:
        raise InvalidArgumentError("order must be non-negative")
    if len(T_list) < k + 1:
        raise InvalidArgumentError(f"need T_0..T_{k}, got {len(T_list)} terms")
    C = _product_sum(T_list, compositions(k))
    zero = 0.0 * np.asarray(T_list[0], dtype=float)
    E = _product_sum(T_list, compositions(k - 1, minimum=1)) + zero if k >= 1 else zero
    return np.asarray(C + zero), np.asarray(E)


def quartic_remainder(T_list: Sequence, k: int):
    """``C(T, k) - 4 T_0**3 T_k``: only indices below ``k`` appear, so ``T_k`` may be absent."""
    if k < 1:
        raise InvalidArgumentError("the remainder is defined for k >= 1")
    if len(T_list) < k:
        raise InvalidArgumentError(f"need T_0..T_{k - 1}")
    combos = tuple(c for c in compositions(k) if max(c) < k)
    return _product_sum(T_list, combos) + 0.0 * np.asarray(T_list[0], dtype=float)


# ---------------------------------------------------------------------------
# fourth-order differences on a uniform grid


def fd4(f, h):
    """Fourth-order first derivative; five-point one-sided stencils at the ends."""
    f = np.asarray(f, dtype=float)
    if f.size < 5:
        raise InvalidArgumentError("need at least five points")
    out = np.empty_like(f)
    out[2:-2] = (f[:-4] - 8.0 * f[1:-3] + 8.0 * f[3:-1] - f[4:]) / (12.0 * h)
    out[0] = (-25.0 * f[0] + 48.0 * f[1] - 36.0 * f[2] + 16.0 * f[3] - 3.0 * f[4]) / (12.0 * h)
    out[1] = (-3.0 * f[0] - 10.0 * f[1] + 18.0 * f[2] - 6.0 * f[3] + f[4]) / (12.0 * h)
    out[-1] = (25.0 * f[-1] - 48.0 * f[-2] + 36.0 * f[-3] - 16.0 * f[-4] + 3.0 * f[-5]) / (12.0 * h)
    out[-2] = (3.0 * f[-1] + 10.0 * f[-2] - 18.0 * f[-3] + 6.0 * f[-4] - f[-5]) / (12.0 * h)
    return out


def checked_derivative(f, h, noise_tol=1e-3, what="field"):
    """:func:`fd4` with a resolution check against the same stencil on every other node."""
    d = fd4(f, h)
    coarse = fd4(np.asarray(f)[::2], 2.0 * h)
    gap = float(np.max(np.abs(d[::2] - coarse)))
    scale = max(1.0, float(np.max(np.abs(d))))
    if gap > noise_tol * scale:
        raise SolverFailure(
            f"derivative of {what} is not resolved (h vs 2h gap {gap:.2e}); "
            "use a finer auxiliary grid"
        )
    return d


def _numerov_rhs(src):
    # (v[i-1] - 2 v[i] + v[i+1]) / h^2 = (f[i-1] + 10 f[i] + f[i+1]) / 12 is fourth order
    out = src.copy()
    out[1:-1] = (src[:-2] + 10.0 * src[1:-1] + src[2:]) / 12.0
    return out


# ---------------------------------------------------------------------------
# interior expansion


class InteriorExpansion:
    """Interior terms ``T_k, psi_k`` built order by order.

    Parameters
    ----------
    T0_left : float
        Far-field value of the order-0 layer, the left Dirichlet value of ``T_0``.
    T_right : float
        Boundary temperature at ``x = 1``.
    quad : AngularQuadrature
    n_aux : int
        Odd number of nodes of the uniform auxiliary grid.
    noise_tol : float
        Relative h-vs-2h gap above which a derivative is rejected.
    """

    def __init__(self, T0_left, T_right, quad: AngularQuadrature, n_aux=201, noise_tol=1e-3):
        if n_aux < 21 or n_aux % 2 == 0:
            raise InvalidArgumentError("n_aux must be odd and at least 21")
        self.quad = quad
        self.x = np.linspace(0.0, 1.0, int(n_aux))
        self.h = self.x[1] - self.x[0]
        self.aux_mesh = Mesh1D(self.x)
        self.noise_tol = noise_tol
        self.T_right = float(T_right)
        T0 = solve_limit_equation(DirichletBC(float(T0_left), self.T_right), self.aux_mesh)
        self.T = [T0]
        self.a = [[T0**4]]
        self._dT = {}
        self._da = {}
        self._splines = {}

    @property
    def order(self):
        return len(self.T) - 1

    def mu_moment(self, p):
        return self.quad.angular_moment(p)

    def dT(self, k, l):
        """``l``-th derivative of ``T_k`` on the auxiliary grid."""
        if l == 0:
            return self.T[k]
        key = (k, l)
        if key not in self._dT:
            self._dT[key] = checked_derivative(self.dT(k, l - 1), self.h, self.noise_tol, f"T_{k}^({l - 1})")
        return self._dT[key]

    def da(self, k, l, times=1):
        """``times``-fold derivative of the coefficient ``a[k][l]``."""
        if times == 0:
            return self.a[k][l]
        key = (k, l, times)
        if key not in self._da:
            self._da[key] = checked_derivative(self.da(k, l, times - 1), self.h, self.noise_tol,
                                               f"a[{k}][{l}]")
        return self._da[key]

    def transport_coefficients(self, k):
        """``a[k][1..k]``, which depend only on orders below ``k``."""
        return [-self.da(k - 1, l) for l in range(k)]

    def extend(self, T_k_inf):
        """Add order ``k = order + 1`` with left value ``T_k_inf`` and ``T_k(1) = 0``."""
        k = self.order + 1
        if k > N_MAX:
            raise UnsupportedOrderError(f"order {k} exceeds N_max = {N_MAX}")
        src = np.zeros_like(self.x)
        for l in range(k):
            mom = self.mu_moment(l + 3)
            if abs(mom) > 1e-14:
                src = src + mom * self.da(k - 1, l, 3)
        R = quartic_remainder(self.T, k)
        kappa = 1.0 + 4.0 * FOUR_PI_THIRD * self.T[0] ** 3
        bc = DirichletBC(kappa[0] * float(T_k_inf) + FOUR_PI_THIRD * R[0], FOUR_PI_THIRD * R[-1])
        v = solve_reaction_diffusion(1.0, 0.0, _numerov_rhs(src), bc, self.aux_mesh)
        Tk = (v - FOUR_PI_THIRD * R) / kappa
        Tk[0], Tk[-1] = float(T_k_inf), 0.0
        higher = self.transport_coefficients(k)
        self.T.append(Tk)
        self.a.append([quartic_products(self.T, k)[0]] + higher)
        return self

    def equation_residual(self, k):
        """Discrete residual of ``(T_k + 4pi/3 C(T,k))'' = <(mu d)^3 psi_{k-1}>`` at interior nodes."""
        if k == 0:
            u = self.T[0] + FOUR_PI_THIRD * self.T[0] ** 4
            return apply_laplacian(u, self.x)
        src = sum(self.mu_moment(l + 3) * self.da(k - 1, l, 3) for l in range(k))
        u = self.T[k] + FOUR_PI_THIRD * quartic_products(self.T, k)[0]
        return apply_laplacian(u, self.x) - _numerov_rhs(np.asarray(src + 0.0 * self.x))[1:-1]

    # -- evaluation on other meshes ------------------------------------------------

    def _spline(self, key, values):
        if key not in self._splines:
            self._splines[key] = CubicSpline(self.x, values)
        return self._splines[key]

    def T_on(self, x, k):
        return self._spline(("T", k), self.T[k])(x)

    def psi_on(self, x, k):
        """Kinetic field ``psi_k`` at ``x``, shape ``(len(x), m)``."""
        mu = self.quad.mu
        out = np.zeros((np.size(x), mu.size))
        for l, coef in enumerate(self.a[k]):
            out += self._spline(("a", k, l), coef)(x)[:, None] * mu[None, :] ** l
        return out

    def dpsi_on(self, x, k):
        """``d psi_k / dx`` at ``x`` from the differentiated coefficients."""
        mu = self.quad.mu
        out = np.zeros((np.size(x), mu.size))
        for l in range(len(self.a[k])):
            out += self._spline(("da", k, l), self.da(k, l))(x)[:, None] * mu[None, :] ** l
        return out


def build_interior(N, bc_far_field, bc_right, quad, n_aux=201, noise_tol=1e-3):
    """Interior expansion up to order ``N`` from the layer far-field values."""
    if N > N_MAX:
        raise UnsupportedOrderError(f"order {N} exceeds N_max = {N_MAX}")
    if len(bc_far_field) < N + 1:
        raise InvalidArgumentError(f"need {N + 1} far-field values")
    inter = InteriorExpansion(bc_far_field[0], bc_right, quad, n_aux, noise_tol)
    for k in range(1, N + 1):
        inter.extend(bc_far_field[k])
    return inter


# ---------------------------------------------------------------------------
# Taylor polynomials at the wall


@dataclass(frozen=True)
class TaylorPoly:
    """``P_k(eta) = sum_l coeffs[l] eta**l`` with ``coeffs[l] = T_{k-l}^(l)(0) / l!``."""

    order: int
    coeffs: tuple

    def __call__(self, eta):
        eta = np.asarray(eta, dtype=float)
        return np.polynomial.polynomial.polyval(eta, self.coeffs)

    def derivative(self):
        c = np.polynomial.polynomial.polyder(np.asarray(self.coeffs, dtype=float)) if len(self.coeffs) > 1 else [0.0]
        return TaylorPoly(max(self.order - 1, 0), tuple(float(v) for v in np.atleast_1d(c)))

    def bound(self):
        """Constant ``C`` with ``|P(eta)| <= C (1 + eta**k)`` on ``eta >= 0``."""
        return float(np.sum(np.abs(self.coeffs)))


def build_taylor(interior: InteriorExpansion, k: int, include_constant=True):
    """Taylor polynomial ``P_k`` from wall derivatives of ``T_0..T_k``.

    With ``include_constant=False`` the term ``T_k(0)`` is dropped, which
    gives ``P_k - P_k(0)`` before ``T_k`` itself is known.
    """
    if include_constant and k > interior.order:
        raise InvalidArgumentError(f"interior expansion only reaches order {interior.order}")
    coeffs = []
    for l in range(k + 1):
        if l == 0 and not include_constant:
            coeffs.append(0.0)
            continue
        coeffs.append(float(interior.dT(k - l, l)[0]) / math.factorial(l))
    return TaylorPoly(k, tuple(coeffs))


# ---------------------------------------------------------------------------
# cutoffs


def _smoothstep(s):
    s = np.clip(s, 0.0, 1.0)
    return s**3 * (10.0 - 15.0 * s + 6.0 * s**2)


def _smoothstep_d(s, order):
    inside = (s > 0.0) & (s < 1.0)
    s = np.clip(s, 0.0, 1.0)
    if order == 1:
        v = 30.0 * s**2 * (1.0 - s) ** 2
    else:
        v = 60.0 * s * (1.0 - s) * (1.0 - 2.0 * s)
    return np.where(inside, v, 0.0)


@dataclass(frozen=True)
class CutoffSpec:
    """Quintic (C^2) cutoffs: ``chi`` drops on ``[delta/4, 3delta/8]``, ``chi0`` on ``[delta/2, 3delta/4]``."""

    delta: float

    def __post_init__(self):
        if not (self.delta > 0 and math.isfinite(self.delta)):
            raise InvalidArgumentError(f"delta must be positive, got {self.delta}")

    def _ramp(self, x, a, b, deriv):
        s = (np.asarray(x, dtype=float) - a) / (b - a)
        if deriv == 0:
            return 1.0 - _smoothstep(s)
        return -_smoothstep_d(s, deriv) / (b - a) ** deriv

    def chi(self, x, deriv=0):
        return self._ramp(x, 0.25 * self.delta, 0.375 * self.delta, deriv)

    def chi0(self, x, deriv=0):
        return self._ramp(x, 0.5 * self.delta, 0.75 * self.delta, deriv)

    @property
    def support(self):
        return 0.375 * self.delta

    def derivative_bounds(self):
        """Sup norms of ``chi'`` and ``chi''`` (1.875 and 5.7735 times powers of ``8/delta``)."""
        w = self.delta / 8.0
        return 1.875 / w, 10.0 / math.sqrt(3.0) / w**2


def delta_bound(eps, N, lam):
    """Lower bound ``-(4/lam)(N+1) eps log eps`` on the cutoff width."""
    return -(4.0 / lam) * (N + 1) * eps * math.log(eps)


def delta_limit(eps, L_eta):
    """Largest width keeping ``chi`` supported in ``[0, 1]`` and inside the Milne truncation."""
    return (8.0 / 3.0) * min(1.0, eps * L_eta)


def auto_delta(eps, N, lam, L_eta, factor=1.5):
    bound = delta_bound(eps, N, lam)
    limit = delta_limit(eps, L_eta)
    if bound >= limit:
        raise InvalidArgumentError(
            f"delta bound {bound:.4g} = -(4/lambda)(N+1) eps log eps exceeds the admissible "
            f"width {limit:.4g}; reduce eps or N"
        )
    return min(factor * bound, limit)


# ---------------------------------------------------------------------------
# the construction pipeline (independent of eps)


def _as_left_inflow(inflow, quad):
    if isinstance(inflow, InflowData):
        return inflow
    if callable(inflow):
        return InflowData.from_function(quad, inflow)
    arr = np.atleast_1d(np.asarray(inflow, dtype=float))
    if arr.size == 1:
        return InflowData.constant(quad, float(arr[0]))
    return InflowData(arr)


@dataclass
class AsymptoticConstruction:
    """Interior terms and Milne layers of orders ``0..N`` for fixed boundary data."""

    N: int
    interior: InteriorExpansion
    milne: list
    disc: MilneDiscretization
    sources: list = field(default_factory=list, repr=False)

    @property
    def quad(self):
        return self.disc.quad

    @property
    def L_eta(self):
        return self.disc.mesh.length

    @property
    def decay_rate(self):
        """Smallest fitted layer decay rate, capped at 1; 1 when no order has a layer."""
        rates = [m.decay_rate for m in self.milne if m.decay_rate != EXACT]
        return min([1.0] + rates)

    def far_field(self, k):
        """Far-field pair used by the correctors, exactly consistent with the wall data."""
        T_inf = self.interior.T[k][0]
        T0 = self.interior.T[0][0]
        psi_inf = T0**4 if k == 0 else 4.0 * T0**3 * T_inf
        return T_inf, psi_inf


def layer_sources(k, interior: InteriorExpansion, milne: Sequence[MilneSolution], disc: MilneDiscretization):
    """Right-hand sides and inflow of the order-``k`` layer problem (slab form).

    With ``Q_j = P_j + (T~_j - T~_j,inf)`` and ``R`` the quartic remainder,

        S2 = 4 (T~_0**3 - T~_0,inf**3)(P_k - P_k(0)) + R(Q, k) - R(P, k),
        S1 = <S2>,
        inflow(mu > 0) = mu psi_{k-1}'(0) - R(T(0), k).
    """
    eta = disc.eta
    P = [build_taylor(interior, j)(eta) for j in range(k)]
    Pk_shift = build_taylor(interior, k, include_constant=False)(eta)
    Q = [P[0] + (milne[0].T - interior.T[0][0])]
    Q[0] = milne[0].T.copy()
    for j in range(1, k):
        Q.append(P[j] + (milne[j].T - interior.T[j][0]))
    T0inf = interior.T[0][0]
    S2 = 4.0 * (milne[0].T**3 - T0inf**3) * Pk_shift + quartic_remainder(Q, k) - quartic_remainder(P, k)
    S1 = disc.quad.angular_moment(0) * S2
    mu = disc.quad.mu[disc.quad.pos]
    wall = [np.array([interior.T[j][0]]) for j in range(k)]
    inflow = -float(quartic_remainder(wall, k)[0]) + sum(
        float(interior.da(k - 1, l)[0]) * mu ** (l + 1) for l in range(k)
    )
    return LayerSources(S1, S2, inflow + 0.0 * mu)


def construct(N, Tb_left, Tb_right, inflow, disc: Optional[MilneDiscretization] = None, n_aux=201,
              tol=1e-10, noise_tol=1e-3):
    """Run the layer/interior alternation up to order ``N``.

    Order 0 solves the nonlinear Milne problem, which fixes ``T_0(0)``;
    each later order first solves its linear Milne problem (whose data
    only involve lower orders) and then the interior equation with the new
    far-field value.
    """
    if N < 0:
        raise InvalidArgumentError("order must be non-negative")
    if N > N_MAX:
        raise UnsupportedOrderError(f"order {N} exceeds N_max = {N_MAX}")
    disc = disc if disc is not None else MilneDiscretization()
    quad = disc.quad
    inflow = _as_left_inflow(inflow, quad)
    m0 = solve_nonlinear_milne(Tb_left, inflow, disc=disc, tol=tol)
    interior = InteriorExpansion(m0.T_inf, Tb_right, quad, n_aux, noise_tol)
    milne = [m0]
    srcs = [None]
    weight = 4.0 * m0.T**3
    for k in range(1, N + 1):
        src = layer_sources(k, interior, milne, disc)
        mk = solve_linear_milne(weight, src, disc=disc, order=k, tol=tol)
        milne.append(mk)
        srcs.append(src)
        interior.extend(mk.T_inf)
    return AsymptoticConstruction(N, interior, milne, disc, srcs)


# ---------------------------------------------------------------------------
# composite approximation on a physical mesh


def composite_mesh(eps, disc: MilneDiscretization, n_bulk=401, ratio=1.05):
    """Physical mesh whose nodes in ``[0, min(1, eps L)]`` are ``eps`` times the Milne nodes.

    Layer profiles are then sampled without interpolation. Beyond that
    region cells grow geometrically up to ``1/(n_bulk-1)``.
    """
    if not 0 < eps < 1:
        raise InvalidArgumentError(f"eps must lie in (0, 1), got {eps}")
    h_bulk = 1.0 / (n_bulk - 1)
    x = eps * disc.eta
    x = x[x < 1.0 - 1e-12]
    nodes = list(x)
    if nodes[-1] < 1.0:
        h = nodes[-1] - nodes[-2]
        while nodes[-1] + max(h, h_bulk) < 1.0 - 0.5 * max(h, h_bulk):
            h = min(h * ratio, h_bulk) if h < h_bulk else h
            nodes.append(nodes[-1] + h)
        if 1.0 - nodes[-1] < 0.25 * (nodes[-1] - nodes[-2]):
            nodes[-1] = 1.0
        else:
            nodes.append(1.0)
    return Mesh1D(np.asarray(nodes))


def _layer_on(mil: MilneSolution, eta, disc):
    """``(T, psi, dpsi/deta)`` of a Milne solution at ``eta`` (nodes reused when they match)."""
    grid = disc.eta
    idx = np.searchsorted(grid, eta)
    idx = np.clip(idx, 0, grid.size - 1)
    lower = np.clip(idx - 1, 0, grid.size - 1)
    pick = np.where(np.abs(grid[lower] - eta) < np.abs(grid[idx] - eta), lower, idx)
    hit = np.abs(grid[pick] - eta) <= 1e-9 * np.maximum(1.0, eta)
    T = mil.T[pick].copy()
    psi = mil.psi[pick].copy()
    dpsi = mil.dpsi_deta()[pick].copy()
    miss = ~hit
    if np.any(miss):
        inside = miss & (eta <= grid[-1])
        if np.any(inside):
            T[inside] = CubicSpline(grid, mil.T)(eta[inside])
            psi[inside] = CubicSpline(grid, mil.psi, axis=0)(eta[inside])
            dpsi[inside] = CubicSpline(grid, mil.dpsi_deta(), axis=0)(eta[inside])
        beyond = miss & (eta > grid[-1])
        T[beyond] = mil.T[-1]
        psi[beyond] = mil.psi[-1]
        dpsi[beyond] = 0.0
    return T, psi, dpsi


@dataclass
class CompositeApproximation:
    """Per-order interior and layer fields on ``mesh`` and their weighted sums.

    ``T_int[k]``, ``T_bar[k]`` are scalar fields, ``psi_int[k]``,
    ``psi_bar[k]`` kinetic fields; ``dpsi`` is the exact x-derivative of
    ``psi_a`` (needed by the transport residual).
    """

    N: int
    eps: float
    mesh: Mesh1D
    quad: AngularQuadrature
    cutoff: CutoffSpec
    construction: AsymptoticConstruction
    T_int: list
    T_bar: list
    psi_int: list
    psi_bar: list
    dpsi: np.ndarray = field(repr=False)

    def truncated(self, m=None, with_layer=True):
        """``(T, psi)`` summed up to order ``m`` (default ``N``)."""
        m = self.N if m is None else m
        if not 0 <= m <= self.N:
            raise InvalidArgumentError(f"truncation order must be within 0..{self.N}")
        T = np.zeros(self.mesh.n)
        psi = np.zeros((self.mesh.n, self.quad.m))
        for k in range(m + 1):
            w = self.eps**k
            T = T + w * self.T_int[k]
            psi = psi + w * self.psi_int[k]
            if with_layer:
                T = T + w * self.T_bar[k]
                psi = psi + w * self.psi_bar[k]
        return T, psi

    @property
    def T_a(self):
        return self.truncated()[0]

    @property
    def psi_a(self):
        return self.truncated()[1]

    def write_csv(self, path, residuals=None):
        """Columns ``x, T_a, <psi_a>, R1`` (R1 is blank at the end nodes)."""
        T, psi = self.truncated()
        mom = moment(psi, self.quad)
        R1 = np.full(self.mesh.n, np.nan)
        if residuals is not None:
            R1[1:-1] = residuals.R1
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x", "T_a", "moment_psi_a", "R1"])
            for i in range(self.mesh.n):
                r = "" if np.isnan(R1[i]) else repr(float(R1[i]))
                w.writerow([repr(float(self.mesh.nodes[i])), repr(float(T[i])), repr(float(mom[i])), r])


def assemble_composite(N, eps, construction: AsymptoticConstruction, cutoff: CutoffSpec, mesh: Mesh1D,
                       check_delta=True):
    """``T_a = sum_k eps**k (T_k + chi (T~_k(x/eps) - T~_k,inf))`` and the ``psi`` analogue.

    Raises
    ------
    InvalidArgumentError
        If ``delta`` violates ``delta > -(4/lam)(N+1) eps log eps`` or the
        cutoff support leaves ``[0, min(1, eps L_eta)]``.
    """
    if N > construction.N:
        raise InvalidArgumentError(f"construction only reaches order {construction.N}")
    if not 0 < eps < 1:
        raise InvalidArgumentError(f"eps must lie in (0, 1), got {eps}")
    if mesh.length != 1.0:
        raise InvalidArgumentError("composite mesh must cover [0, 1]")
    disc = construction.disc
    lam = construction.decay_rate
    limit = delta_limit(eps, disc.mesh.length)
    if cutoff.delta > limit * (1 + 1e-12):
        raise InvalidArgumentError(f"delta {cutoff.delta:.4g} exceeds the admissible width {limit:.4g}")
    if check_delta and not cutoff.delta > delta_bound(eps, N, lam):
        raise InvalidArgumentError(
            f"delta {cutoff.delta:.4g} must exceed -(4/lambda)(N+1) eps log eps = {delta_bound(eps, N, lam):.4g}"
        )
    x = mesh.nodes
    eta = x / eps
    inter = construction.interior
    chi, dchi = cutoff.chi(x), cutoff.chi(x, 1)
    T_int, T_bar, psi_int, psi_bar = [], [], [], []
    dpsi = np.zeros((mesh.n, construction.quad.m))
    for k in range(N + 1):
        T_int.append(inter.T_on(x, k))
        psi_int.append(inter.psi_on(x, k))
        T_inf, psi_inf = construction.far_field(k)
        Tl, psil, dpsil = _layer_on(construction.milne[k], eta, disc)
        T_bar.append(chi * (Tl - T_inf))
        psi_bar.append(chi[:, None] * (psil - psi_inf))
        dpsi += eps**k * (inter.dpsi_on(x, k) + dchi[:, None] * (psil - psi_inf) + chi[:, None] * dpsil / eps)
    return CompositeApproximation(N, eps, mesh, construction.quad, cutoff, construction,
                                  T_int, T_bar, psi_int, psi_bar, dpsi)


# ---------------------------------------------------------------------------
# residuals


@dataclass
class Residuals:
    """``R1`` at interior nodes, ``R2`` at interior nodes and all ordinates, and their norms."""

    R1: np.ndarray
    R2: np.ndarray
    norms: dict


def evaluate_residuals(approx: CompositeApproximation, derivative="exact"):
    """Apply ``R1 = eps^2 T'' + <psi - T^4>`` and ``R2 = eps mu psi' + psi - T^4`` to the composite.

    ``derivative="exact"`` differentiates ``psi_a`` term by term (interior
    coefficients and the Milne transport equation); ``"centered"`` uses
    second-order differences on the mesh instead.
    """
    eps = approx.eps
    x = approx.mesh.nodes
    quad = approx.quad
    T, psi = approx.truncated()
    if derivative == "exact":
        dpsi = approx.dpsi
    elif derivative == "centered":
        dpsi = central_derivative(psi, x)
    else:
        raise InvalidArgumentError(f"unknown derivative mode {derivative!r}")
    T4 = T**4
    R1 = eps**2 * apply_laplacian(T, x) + moment(psi[1:-1], quad) - FOUR_PI * T4[1:-1]
    R2 = (eps * quad.mu[None, :] * dpsi + psi - T4[:, None])[1:-1]
    xi = x[1:-1]
    norms = {
        "R1_sup": float(np.max(np.abs(R1))) if R1.size else 0.0,
        "R2_sup": float(np.max(np.abs(R2))) if R2.size else 0.0,
        "R1_L2": float(math.sqrt(trapezoid(R1**2, xi))) if R1.size > 1 else 0.0,
        "R2_L2": float(math.sqrt(trapezoid(moment(R2**2, quad), xi))) if R2.size > 1 else 0.0,
    }
    return Residuals(R1, R2, norms)
