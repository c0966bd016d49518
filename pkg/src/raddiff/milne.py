"""Nonlinear and linear Milne problems on a truncated half-space.

The stretched layer variable is ``eta = x / eps``. With the transport part
eliminated exactly through the dense moment operator ``K`` of the
half-space sweep, each problem reduces to a nodal equation for the
temperature alone,

    D2 T + K E(T) + m_src - 4 pi E(T) = S1,

with ``E(T) = T**4`` (order 0) or ``E(g) = w g`` (orders k >= 1). The
iteration is a damped Newton method on this reduced system; for the
linear problems a single step is exact and the second step only
confirms convergence.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
import scipy.linalg

from .errors import InvalidArgumentError, SolverFailure
from .mesh import AngularQuadrature, Mesh1D, build_mesh, gauss_quadrature, laplacian_coefficients, moment
from .transport import InflowData, TransportSweeper

log = logging.getLogger(__name__)

FOUR_PI = 4.0 * math.pi
EXACT = "exact"
TAIL_FRACTION = 0.9


def milne_mesh(L_eta=60.0, h_bulk=0.05, n_layer=400, ratio=1.01, layer_width=5.0):
    """Default half-space mesh: geometric cells near ``eta = 0``, uniform beyond."""
    if not L_eta > 0:
        raise InvalidArgumentError(f"L_eta must be positive, got {L_eta}")
    n_bulk = max(2, int(round(L_eta / h_bulk)) + 1)
    return build_mesh(n_bulk, n_layer, 1.0, "layer_graded", L_eta, ratio=ratio, layer_width=layer_width)


class MilneDiscretization:
    """Mesh, quadrature and the operators shared by every Milne solve on them.

    Building ``K`` costs ``O(n**2 m)``, so one instance should be reused
    across orders and boundary data.
    """

    def __init__(self, mesh: Optional[Mesh1D] = None, quad: Optional[AngularQuadrature] = None):
        self.mesh = mesh if mesh is not None else milne_mesh()
        self.quad = quad if quad is not None else gauss_quadrature(8)
        self.sweeper = TransportSweeper(1.0, self.mesh, self.quad)
        self.K = self.sweeper.moment_operator(half_space=True)
        x = self.mesh.nodes
        n = self.mesh.n
        lo, d, up = laplacian_coefficients(x)
        D = np.zeros((n, n))
        i = np.arange(1, n - 1)
        D[i, i - 1], D[i, i], D[i, i + 1] = lo, d, up
        h = x[-1] - x[-2]
        # zero-flux ghost node at the far end
        D[-1, -2], D[-1, -1] = 2.0 / h**2, -2.0 / h**2
        self.D = D
        self.tail = x >= TAIL_FRACTION * self.mesh.length

    @property
    def eta(self):
        return self.mesh.nodes

    def tail_mean(self, f):
        return np.mean(np.asarray(f)[self.tail], axis=0)


@dataclass
class LayerSources:
    """Right-hand sides of a linear Milne problem.

    ``S1`` is a scalar field, ``S2`` a scalar or kinetic field on the
    Milne mesh, ``inflow`` the incoming values for mu > 0 at ``eta = 0``.
    """

    S1: np.ndarray
    S2: np.ndarray
    inflow: np.ndarray

    def __post_init__(self):
        self.S1 = np.asarray(self.S1, dtype=float)
        self.S2 = np.asarray(self.S2, dtype=float)
        self.inflow = np.atleast_1d(np.asarray(self.inflow, dtype=float))
        for name in ("S1", "S2", "inflow"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise InvalidArgumentError(f"layer source {name} must be finite")

    def check(self, disc: MilneDiscretization, tail_tol):
        n, m = disc.mesh.n, disc.quad.m
        if self.S1.shape != (n,):
            raise InvalidArgumentError(f"S1 has shape {self.S1.shape}, expected ({n},)")
        if self.S2.shape not in ((n,), (n, m)):
            raise InvalidArgumentError(f"S2 has shape {self.S2.shape}, expected ({n},) or ({n}, {m})")
        if self.inflow.shape == (1,):
            self.inflow = np.full(m // 2, self.inflow[0])
        if self.inflow.shape != (m // 2,):
            raise InvalidArgumentError(f"inflow needs {m // 2} values")
        scale = max(1.0, float(np.max(np.abs(self.S1))), float(np.max(np.abs(self.S2))))
        tail = max(float(np.max(np.abs(self.S1[disc.tail]))), float(np.max(np.abs(self.S2[disc.tail]))))
        if tail > tail_tol * scale:
            raise InvalidArgumentError(f"layer sources do not decay: tail size {tail:.3e}")

    @classmethod
    def zero(cls, disc: MilneDiscretization):
        return cls(np.zeros(disc.mesh.n), np.zeros(disc.mesh.n), np.zeros(disc.quad.m // 2))


@dataclass
class MilneSolution:
    """Converged layer profile of order ``order`` and its far-field data.

    ``relation_defect`` is ``max |psi_inf - T_inf**4|`` for order 0 and
    ``max |psi_inf - w_inf * T_inf|`` with ``w_inf = 4 T0_inf**3`` otherwise.
    """

    order: int
    eta: np.ndarray
    mu: np.ndarray
    T: np.ndarray
    psi: np.ndarray
    T_inf: float
    psi_inf: np.ndarray
    decay_rate: Union[float, str]
    relation_defect: float
    residual: float
    iterations: int
    source: np.ndarray = field(default=None, repr=False)
    trace: list = field(default_factory=list, repr=False)

    @property
    def has_layer(self):
        return self.decay_rate != EXACT

    def dpsi_deta(self):
        """Exact nodal derivative of ``psi`` from its transport equation ``mu psi' = S - psi``."""
        S = self.source if self.source.ndim == 2 else self.source[:, None]
        return (S - self.psi) / self.mu[None, :]

    def write_csv(self, path):
        """Write ``eta, T, psi(mu_1), ..., psi(mu_m)`` with round-trip precision."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["eta", "T"] + [f"psi_mu{j}" for j in range(self.mu.size)])
            for i in range(self.eta.size):
                w.writerow([repr(float(self.eta[i])), repr(float(self.T[i]))]
                           + [repr(float(v)) for v in self.psi[i]])


def fit_decay_rate(profile, far_value, window=(1.0, 30.0), x=None, floor=1e-14):
    """Exponential decay rate of ``|profile - far_value|`` by least squares.

    Parameters
    ----------
    profile : array_like
    far_value : float
    window : (float, float)
        Range of ``x`` used in the fit.
    x : array_like, optional
        Abscissae; defaults to ``arange(len(profile))``.
    floor : float
        Deviations at or below ``floor`` everywhere mean there is no layer.

    Returns
    -------
    float or str
        ``lambda = -slope`` of ``log|profile - far_value|``, or ``"exact"``
        when the deviation never exceeds ``floor``.
    """
    f = np.asarray(profile, dtype=float)
    x = np.arange(f.size, dtype=float) if x is None else np.asarray(x, dtype=float)
    lo, hi = window
    if not lo < hi:
        raise InvalidArgumentError("decay window must satisfy lo < hi")
    dev = np.abs(f - far_value)
    if not np.any(dev > floor):
        return EXACT
    # round-off in the far field would flatten the slope, so keep points well above it
    noise = max(floor, 1e-12 * max(1.0, abs(far_value)))
    sel = (x >= lo) & (x <= hi) & (dev > 10.0 * noise)
    if np.count_nonzero(sel) < 3:
        if dev.max() <= 100.0 * noise:
            log.debug("layer amplitude %.2e is at round-off level", dev.max())
            return EXACT
        raise InvalidArgumentError("fewer than three resolvable points inside the decay window")
    slope = np.polyfit(x[sel], np.log(dev[sel]), 1)[0]
    lam = -float(slope)
    if not lam > 0:
        raise SolverFailure(f"profile does not decay in the window (fitted rate {lam:.3g})")
    return lam


def _damped_newton(disc, residual, jacobian, u0, tol, max_iter, omega, what):
    """Newton on nodes ``1..n-1`` with step halving on oscillation."""
    u = np.array(u0, dtype=float)
    trace = []
    prev = math.inf
    for it in range(1, max_iter + 1):
        J = jacobian(u)[1:, 1:]
        F = residual(u)[1:]
        step = scipy.linalg.solve(J, -F, check_finite=False)
        size = float(np.max(np.abs(step)))
        if size > prev and it > 2:
            omega *= 0.5
            log.info("%s: step grew (%.3e > %.3e), damping reduced to %g", what, size, prev, omega)
            if omega < 1e-3:
                raise SolverFailure(f"{what}: damping underflow", trace)
        u[1:] += omega * step
        change = omega * size
        trace.append(change)
        if not np.all(np.isfinite(u)):
            raise SolverFailure(f"{what}: iterate became non-finite", trace)
        if change < tol:
            return u, trace
        prev = size
    raise SolverFailure(f"{what}: no convergence to {tol:g} in {max_iter} iterations "
                        f"(last change {trace[-1]:.3e})", trace)


def _as_inflow(inflow, quad):
    if isinstance(inflow, InflowData):
        return inflow
    arr = np.atleast_1d(np.asarray(inflow, dtype=float))
    if arr.size == 1:
        return InflowData.constant(quad, float(arr[0]))
    return InflowData(arr)


def solve_nonlinear_milne(Tb0, inflow, L_eta=60.0, tol=1e-10, *, disc=None, omega=1.0, max_iter=60,
                          window=(1.0, 30.0)):
    """Order-0 layer: ``T'' + <psi - T**4> = 0``, ``mu psi' + psi = T**4``.

    Parameters
    ----------
    Tb0 : float
        Temperature at ``eta = 0``.
    inflow : InflowData, float or array
        Incoming intensity for mu > 0.
    L_eta : float
        Truncation length, used when ``disc`` is not given.
    tol : float
        Converged once the sup-norm change between iterates is below ``tol``.
    disc : MilneDiscretization, optional
    omega : float
        Initial damping in ``(0, 1]``; halved whenever the step grows.

    Returns
    -------
    MilneSolution
    """
    if not Tb0 >= 0:
        raise InvalidArgumentError(f"Tb0 must be non-negative, got {Tb0}")
    if not 0 < omega <= 1:
        raise InvalidArgumentError("omega must lie in (0, 1]")
    disc = disc if disc is not None else MilneDiscretization(milne_mesh(L_eta))
    quad = disc.quad
    inflow = _as_inflow(inflow, quad)
    inflow.check(quad, need_right=False)
    if np.any(inflow.left < 0):
        raise InvalidArgumentError("inflow must be non-negative")

    n = disc.mesh.n
    m_in = moment(disc.sweeper.half_space(np.zeros(n), inflow), quad)
    KmI = disc.K - FOUR_PI * np.eye(n)

    def residual(T):
        return disc.D @ T + KmI @ T**4 + m_in

    def jacobian(T):
        return disc.D + KmI * (4.0 * T**3)[None, :]

    # start from the far-field guess with the Dirichlet value pinned
    T0 = np.full(n, max(float(Tb0), (float(np.mean(m_in[-5:])) / FOUR_PI) ** 0.25, (np.mean(inflow.left) / 2) ** 0.25))
    T0[0] = Tb0
    T, trace = _damped_newton(disc, residual, jacobian, T0, tol, max_iter, omega, "nonlinear Milne")
    if np.any(T < 0):
        raise SolverFailure("negative temperature in nonlinear Milne solve", trace)
    psi = disc.sweeper.half_space(T**4, inflow)
    T_inf = float(disc.tail_mean(T))
    psi_inf = disc.tail_mean(psi)
    lam = fit_decay_rate(T, T_inf, window, disc.eta)
    return MilneSolution(
        order=0, eta=disc.eta, mu=quad.mu, T=T, psi=psi, T_inf=T_inf, psi_inf=psi_inf,
        decay_rate=lam, relation_defect=float(np.max(np.abs(psi_inf - T_inf**4))),
        residual=float(np.max(np.abs(residual(T)[1:]))), iterations=len(trace), source=T**4, trace=trace,
    )


def solve_linear_milne(weight, sources: LayerSources, L_eta=60.0, tol=1e-10, *, disc=None, order=1,
                       weight_floor=0.0, tail_tol=1e-8, omega=1.0, max_iter=10, window=(1.0, 30.0)):
    """Order-k layer: ``g'' + <phi - w g> = S1``, ``mu phi' + phi - w g = S2``, ``g(0) = 0``.

    Parameters
    ----------
    weight : array_like
        ``w = 4 T0**3`` on the Milne mesh, strictly above ``weight_floor``.
    sources : LayerSources
    order : int
        Recorded in the solution only.

    Returns
    -------
    MilneSolution
        ``T`` holds ``g`` and ``psi`` holds ``phi``.
    """
    disc = disc if disc is not None else MilneDiscretization(milne_mesh(L_eta))
    n = disc.mesh.n
    w = np.asarray(weight, dtype=float)
    if w.shape != (n,):
        raise InvalidArgumentError(f"weight has shape {w.shape}, expected ({n},)")
    if not np.all(w > weight_floor) or not np.all(np.isfinite(w)):
        raise InvalidArgumentError("weight must be finite and exceed the configured lower bound")
    sources.check(disc, tail_tol)
    quad = disc.quad
    inflow = InflowData(sources.inflow)
    m_src = moment(disc.sweeper.half_space(sources.S2, inflow), quad)
    A = disc.D + (disc.K - FOUR_PI * np.eye(n)) * w[None, :]
    rhs = m_src - sources.S1

    def residual(g):
        return A @ g + rhs

    g, trace = _damped_newton(disc, residual, lambda g: A, np.zeros(n), tol, max_iter, omega,
                              f"linear Milne order {order}")
    S2 = sources.S2 if sources.S2.ndim == 2 else sources.S2[:, None]
    source = np.ascontiguousarray(np.broadcast_to(w[:, None] * g[:, None] + S2, (n, quad.m)))
    phi = disc.sweeper.half_space(source, inflow)
    g_inf = float(disc.tail_mean(g))
    phi_inf = disc.tail_mean(phi)
    w_inf = float(disc.tail_mean(w))
    lam = fit_decay_rate(g, g_inf, window, disc.eta)
    return MilneSolution(
        order=order, eta=disc.eta, mu=quad.mu, T=g, psi=phi, T_inf=g_inf, psi_inf=phi_inf,
        decay_rate=lam, relation_defect=float(np.max(np.abs(phi_inf - w_inf * g_inf))),
        residual=float(np.max(np.abs(residual(g)[1:]))), iterations=len(trace), source=source, trace=trace,
    )
