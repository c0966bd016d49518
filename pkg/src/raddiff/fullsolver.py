"""Full eps-dependent solves and their distance to the composite approximation.

Two schemes solve the same discrete system

    eps^2 D2 T + <psi> - 4 pi T^4 = 0   (interior nodes),
    psi = sweep(T^4, psi_b),

so their outputs can be compared node by node:

* :func:`solve_picard` alternates a transport sweep and a Newton solve
  for the temperature (the fixed-point map of the existence proof);
* :func:`solve_contraction` iterates on the deviation ``(g, phi)`` from
  the composite approximation, one linear coupled solve per step with the
  quadratic-to-quartic terms lagged.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from .elliptic import DirichletBC, solve_nonlinear_temperature, solve_reaction_diffusion
from .errors import InvalidArgumentError, SolverFailure
from .mesh import AngularQuadrature, Mesh1D, apply_laplacian, moment, trapezoid
from .transport import InflowData, TransportSweeper

log = logging.getLogger(__name__)

FOUR_PI = 4.0 * math.pi


@dataclass
class SolveReport:
    """Outcome of a full solve; ``residual_T`` and ``residual_psi`` are sup norms of the discrete equations."""

    method: str
    converged: bool
    iterations: int
    residual_T: float
    residual_psi: float
    ratios: list = field(default_factory=list)
    contraction_factor: Optional[float] = None
    wall_time: float = 0.0
    bounds_ok: Optional[bool] = None

    def to_dict(self):
        return asdict(self)

    def write_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


@dataclass
class PerturbationFields:
    """Deviation ``g = T - T_a``, ``phi = psi - psi_a``."""

    g: np.ndarray
    phi: np.ndarray

    def boundary_defect(self, quad: AngularQuadrature):
        """Largest violation of ``g = 0`` at both ends and ``phi = 0`` on incoming ordinates."""
        return max(abs(self.g[0]), abs(self.g[-1]),
                   float(np.max(np.abs(self.phi[0, quad.pos]))),
                   float(np.max(np.abs(self.phi[-1, quad.neg]))))


def discrete_residuals(eps, T, psi, Tb: DirichletBC, inflow: InflowData, mesh: Mesh1D, quad: AngularQuadrature,
                       sweeper: Optional[TransportSweeper] = None):
    """Sup norms of the discrete temperature equation and of ``psi - sweep(T^4, psi_b)``."""
    sweeper = sweeper if sweeper is not None else TransportSweeper(eps, mesh, quad)
    rT = eps**2 * apply_laplacian(T, mesh.nodes) + moment(psi[1:-1], quad) - FOUR_PI * T[1:-1] ** 4
    rT = max(float(np.max(np.abs(rT))), abs(T[0] - Tb.left), abs(T[-1] - Tb.right))
    rpsi = float(np.max(np.abs(psi - sweeper.sweep(T**4, inflow))))
    return rT, rpsi


def _admissible_bounds(Tb: DirichletBC, inflow: InflowData):
    lo_b = min(Tb.left, Tb.right)
    hi_b = max(Tb.left, Tb.right)
    lo_p = float(min(inflow.left.min(), inflow.right.min()))
    hi_p = float(max(inflow.left.max(), inflow.right.max()))
    return min(lo_b, max(lo_p, 0.0) ** 0.25), max(hi_b, max(hi_p, 0.0) ** 0.25)


def solve_picard(eps, Tb: DirichletBC, inflow: InflowData, mesh: Mesh1D, quad: AngularQuadrature, tol=1e-11,
                 max_iter=100000, T_init=None):
    """Fixed-point iteration: ``psi = sweep(T^4)``, then Newton for ``eps^2 T'' - 4 pi T^4 = -<psi>``.

    Parameters
    ----------
    eps : float
    Tb : DirichletBC
        Wall temperatures.
    inflow : InflowData
        Incoming intensities at both walls.
    mesh, quad
    tol : float
        Stop when the sup-norm change of ``T`` between iterates is below ``tol``.
    max_iter : int
    T_init : array_like, optional
        Starting temperature; defaults to the linear interpolant of ``Tb``.

    Returns
    -------
    T, psi, SolveReport
    """
    if not eps > 0:
        raise InvalidArgumentError(f"eps must be positive, got {eps}")
    if Tb.left < 0 or Tb.right < 0:
        raise InvalidArgumentError("wall temperatures must be non-negative")
    inflow.check(quad, need_right=True)
    if np.any(inflow.left < 0) or np.any(inflow.right < 0):
        raise InvalidArgumentError("inflow must be non-negative")
    t0 = time.perf_counter()
    sweeper = TransportSweeper(eps, mesh, quad)
    x = mesh.nodes
    T = Tb.left + (Tb.right - Tb.left) * x / mesh.length if T_init is None else np.array(T_init, dtype=float)
    ratios = []
    prev = None
    change = math.inf
    it = 0
    for it in range(1, max_iter + 1):
        psi = sweeper.sweep(T**4, inflow)
        T_new = solve_nonlinear_temperature(eps, moment(psi, quad), Tb, mesh, tol=0.1 * tol, theta0=T)
        change = float(np.max(np.abs(T_new - T)))
        if prev is not None and prev > 0:
            ratios.append(change / prev)
        prev = change
        T = T_new
        if change < tol:
            break
    else:
        last = ratios[-1] if ratios else float("nan")
        raise SolverFailure(f"Picard iteration hit the cap of {max_iter} (change {change:.3e}, ratio {last:.6f})",
                            ratios[-20:])
    psi = sweeper.sweep(T**4, inflow)
    rT, rpsi = discrete_residuals(eps, T, psi, Tb, inflow, mesh, quad, sweeper)
    g1, g2 = _admissible_bounds(Tb, inflow)
    slack = 1e-9 * max(1.0, g2)
    bounds_ok = bool(np.all(T >= g1 - slack) and np.all(T <= g2 + slack)
                     and np.all(psi >= g1**4 - slack) and np.all(psi <= g2**4 + slack))
    report = SolveReport("picard", True, it, rT, rpsi, ratios[-50:],
                         float(np.median(ratios[-20:])) if ratios else None,
                         time.perf_counter() - t0, bounds_ok)
    return T, psi, report


def _kinetic(v, n, m):
    v = np.asarray(v, dtype=float)
    if v.ndim == 1:
        v = v[:, None]
    return np.broadcast_to(v, (n, m))


def linearized_solve(eps, Ta, r1, r2, r, mesh: Mesh1D, quad: AngularQuadrature, tol=1e-12, *,
                     phi_offset=None, method="gmres", sweeper=None, max_iter=5000):
    """Solve ``eps^2 g'' + <phi - 4Ta^3 g> = r1 + <r>``, ``eps mu phi' + phi - 4Ta^3 g = r2 + r``.

    Homogeneous data: ``g = 0`` at both ends, ``phi = 0`` on incoming ordinates.
    The source iteration ``g -> sweep -> reaction-diffusion solve`` is an
    affine map ``g -> M g + b``; ``method="gmres"`` solves ``(I - M) g = b``
    with restarted GMRES, ``method="source_iteration"`` iterates the map.

    Parameters
    ----------
    Ta : array_like
        Composite temperature, strictly positive.
    r1 : array_like
        Scalar source (all nodes; end values are ignored).
    r2, r : array_like
        Scalar or kinetic sources.
    phi_offset : array_like, optional
        Kinetic field added to ``phi`` after the sweep. Used to carry the
        exact discrete transport defect of the composite approximation.

    Returns
    -------
    PerturbationFields
    """
    n, m = mesh.n, quad.m
    Ta = np.asarray(Ta, dtype=float)
    if Ta.shape != (n,) or not np.all(Ta > 0):
        raise InvalidArgumentError("Ta must be a positive scalar field on the mesh")
    sweeper = sweeper if sweeper is not None else TransportSweeper(eps, mesh, quad)
    w = 4.0 * Ta**3
    r1 = np.broadcast_to(np.asarray(r1, dtype=float), (n,))
    r2 = _kinetic(r2, n, m)
    r = _kinetic(r, n, m)
    src_fixed = r2 + r
    rhs_fixed = r1 + moment(r, quad)
    zero_in = InflowData(np.zeros(m // 2), np.zeros(m // 2))
    offset = None if phi_offset is None else np.asarray(phi_offset, dtype=float)
    bc0 = DirichletBC(0.0, 0.0)
    c = FOUR_PI * w

    def transport(g, with_fixed):
        S = w[:, None] * g[:, None] + (src_fixed if with_fixed else 0.0)
        phi = sweeper.sweep(np.broadcast_to(S, (n, m)), zero_in)
        if with_fixed and offset is not None:
            phi = phi + offset
        return phi

    def step(g, with_fixed):
        phi = transport(g, with_fixed)
        f = (rhs_fixed if with_fixed else 0.0) - moment(phi, quad)
        return solve_reaction_diffusion(eps**2, c, f, bc0, mesh)

    b = step(np.zeros(n), True)
    if method == "gmres":
        A = LinearOperator((n, n), matvec=lambda v: v - step(np.asarray(v).ravel(), False), dtype=float)
        g, info = gmres(A, b, rtol=0.0, atol=tol, restart=80, maxiter=max_iter)
        if info != 0:
            raise SolverFailure(f"GMRES stagnated (info={info})")
    elif method == "source_iteration":
        g = b
        for _ in range(max_iter):
            g_new = step(g, True)
            if np.max(np.abs(g_new - g)) < tol:
                g = g_new
                break
            g = g_new
        else:
            raise SolverFailure("source iteration stagnated")
    else:
        raise InvalidArgumentError(f"unknown method {method!r}")
    g[0] = g[-1] = 0.0
    return PerturbationFields(g, transport(g, True))


def solve_contraction(eps, approx, Tb: DirichletBC, inflow: InflowData, tol=1e-11, max_iter=50,
                      linear_method="gmres"):
    """Iterate ``(g^n, phi^n)`` around the composite approximation ``approx``.

    Each step solves the linear system with ``r1 = -R1``, ``r = N(g^{n-1})``
    where ``N(g) = 6Ta^2 g^2 + 4Ta g^3 + g^4`` and ``R1`` is the discrete
    temperature residual of ``(T_a, psi_a)``. The discrete transport defect
    ``sweep(Ta^4, psi_b) - psi_a`` enters as ``phi_offset``, so the fixed
    point solves exactly the same discrete system as :func:`solve_picard`.

    Returns
    -------
    T, psi, SolveReport
        ``contraction_factor`` is the largest ratio of successive update
        sizes after the first step.
    """
    t0 = time.perf_counter()
    mesh, quad = approx.mesh, approx.quad
    inflow.check(quad, need_right=True)
    Ta, psia = approx.truncated()
    x = mesh.nodes
    sweeper = TransportSweeper(eps, mesh, quad)
    R1 = np.zeros(mesh.n)
    R1[1:-1] = eps**2 * apply_laplacian(Ta, x) + moment(psia[1:-1], quad) - FOUR_PI * Ta[1:-1] ** 4
    offset = sweeper.sweep(Ta**4, inflow) - psia
    g = np.zeros(mesh.n)
    phi = np.zeros((mesh.n, quad.m))
    ratios = []
    sizes = []
    above = 0
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        Nl = 6.0 * Ta**2 * g**2 + 4.0 * Ta * g**3 + g**4
        pert = linearized_solve(eps, Ta, -R1, 0.0, Nl, mesh, quad, tol=0.1 * tol, phi_offset=offset,
                                method=linear_method, sweeper=sweeper)
        size = max(float(np.max(np.abs(pert.g - g))), float(np.max(np.abs(pert.phi - phi))))
        if sizes and sizes[-1] > 0:
            ratios.append(size / sizes[-1])
            above = above + 1 if ratios[-1] >= 1.0 else 0
        sizes.append(size)
        g, phi = pert.g, pert.phi
        if size < tol:
            converged = True
            break
        if above >= 3:
            raise SolverFailure(
                f"contraction diverges at eps={eps:g}: update ratios {ratios[-3:]} >= 1; eps is likely too large",
                ratios,
            )
    if not converged:
        raise SolverFailure(f"contraction did not converge in {max_iter} iterations", ratios)
    T = Ta + g
    psi = psia + phi
    rT, rpsi = discrete_residuals(eps, T, psi, Tb, inflow, mesh, quad, sweeper)
    factor = max(ratios) if ratios else 0.0
    report = SolveReport("contraction", True, it, rT, rpsi, ratios, factor, time.perf_counter() - t0)
    return T, psi, report


def error_norms(T, psi, approx, m=0, with_layer=True):
    """Distance from ``(T, psi)`` to the composite truncated at order ``m``."""
    Tm, psim = approx.truncated(m, with_layer)
    x = approx.mesh.nodes
    dT = np.asarray(T) - Tm
    dpsi = np.asarray(psi) - psim
    return {
        "sup_T": float(np.max(np.abs(dT))),
        "sup_psi": float(np.max(np.abs(dpsi))),
        "L2_T": float(math.sqrt(trapezoid(dT**2, x))),
        "L2_psi": float(math.sqrt(trapezoid(moment(dpsi**2, approx.quad), x))),
    }


def write_solution_csv(path, mesh: Mesh1D, T, psi, quad: AngularQuadrature, kinetic=False):
    """Columns ``x, T, <psi>/4pi`` and, with ``kinetic=True``, one column per ordinate."""
    mom = moment(psi, quad) / FOUR_PI
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        head = ["x", "T", "mean_psi"]
        if kinetic:
            head += [f"psi_mu{j}" for j in range(quad.m)]
        w.writerow(head)
        for i in range(mesh.n):
            row = [repr(float(mesh.nodes[i])), repr(float(T[i])), repr(float(mom[i]))]
            if kinetic:
                row += [repr(float(v)) for v in psi[i]]
            w.writerow(row)
