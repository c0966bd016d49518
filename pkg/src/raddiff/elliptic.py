"""One-dimensional elliptic solves on non-uniform meshes."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from .errors import InvalidArgumentError, SolverFailure
from .mesh import Mesh1D, apply_laplacian, laplacian_coefficients

log = logging.getLogger(__name__)

FOUR_PI_THIRD = 4.0 * math.pi / 3.0


@dataclass(frozen=True)
class DirichletBC:
    left: float
    right: float

    def __post_init__(self):
        if not (math.isfinite(self.left) and math.isfinite(self.right)):
            raise InvalidArgumentError("boundary values must be finite")


def _as_field(v, n, name):
    arr = np.asarray(v, dtype=float)
    if arr.ndim == 0:
        arr = np.full(n, float(arr))
    if arr.shape != (n,):
        raise InvalidArgumentError(f"{name} has shape {arr.shape}, expected ({n},)")
    return arr


def solve_reaction_diffusion(a, c, f, bc, mesh: Mesh1D, right="dirichlet"):
    """Solve ``a*u'' - c*u = f`` with ``u(0) = bc.left``.

    Parameters
    ----------
    a : float
        Positive diffusion coefficient.
    c : array_like or float
        Non-negative reaction coefficient per node.
    f : array_like or float
        Right-hand side per node.
    bc : DirichletBC
        ``bc.right`` is the value at the far end for ``right="dirichlet"``
        and the outward derivative ``u'(L)`` for ``right="neumann"``.
    mesh : Mesh1D
    right : {"dirichlet", "neumann"}

    Returns
    -------
    numpy.ndarray
        Nodal solution; the three-point scheme is exact for quadratics.
    """
    if not a > 0:
        raise InvalidArgumentError(f"diffusion coefficient must be positive, got {a}")
    n = mesh.n
    c = _as_field(c, n, "c")
    f = _as_field(f, n, "f")
    if np.any(c < 0):
        raise InvalidArgumentError("reaction coefficient must be non-negative")
    x = mesh.nodes
    lo, d, up = laplacian_coefficients(x)

    ab = np.zeros((3, n))
    rhs = f.copy()
    ab[1, 0] = 1.0
    rhs[0] = bc.left
    ab[0, 2:] = a * up
    ab[1, 1:-1] = a * d - c[1:-1]
    ab[2, :-2] = a * lo
    if right == "dirichlet":
        ab[1, -1] = 1.0
        rhs[-1] = bc.right
    elif right == "neumann":
        h = x[-1] - x[-2]
        # ghost-node reflection: u'' ~ 2(u[-2] - u[-1] + h*g)/h^2
        ab[2, -2] = 2.0 * a / h**2
        ab[1, -1] = -2.0 * a / h**2 - c[-1]
        rhs[-1] = f[-1] - 2.0 * a * bc.right / h
    else:
        raise InvalidArgumentError(f"unknown right boundary type {right!r}")

    u = solve_banded((1, 1), ab, rhs, check_finite=False)
    resid = _banded_matvec(ab, u) - rhs
    scale = max(np.max(np.abs(rhs)), np.max(np.abs(ab)) * np.max(np.abs(u)), 1e-300)
    if np.max(np.abs(resid)) > 1e-10 * scale:
        log.warning("tridiagonal solve residual %.3e exceeds 1e-10 relative", np.max(np.abs(resid)) / scale)
    return u


def _banded_matvec(ab, u):
    out = ab[1] * u
    out[:-1] += ab[0, 1:] * u[1:]
    out[1:] += ab[2, :-1] * u[:-1]
    return out


def invert_quartic_map(u, k=FOUR_PI_THIRD, tol=1e-12, max_iter=100):
    """Nodewise root of ``T + k*T**4 = u`` for ``u >= 0``.

    Newton from the upper bound ``min(u, (u/k)**0.25)`` decreases
    monotonically because the map is convex and increasing on ``T >= 0``;
    steps leaving the bracket ``[0, u]`` are replaced by bisection.
    """
    u = np.asarray(u, dtype=float)
    if np.any(u < 0):
        raise InvalidArgumentError("quartic inversion needs u >= 0")
    lo = np.zeros_like(u)
    hi = np.minimum(u, (u / k) ** 0.25)
    t = hi.copy()
    for _ in range(max_iter):
        fval = t + k * t**4 - u
        lo = np.where(fval < 0, t, lo)
        hi = np.where(fval > 0, t, hi)
        step = fval / (1.0 + 4.0 * k * t**3)
        t_new = t - step
        bad = (t_new < lo) | (t_new > hi)
        t_new = np.where(bad, 0.5 * (lo + hi), t_new)
        done = np.abs(t_new - t) <= tol * np.maximum(1.0, t)
        t = t_new
        if np.all(done):
            break
    return t


def solve_limit_equation(bc: DirichletBC, mesh: Mesh1D):
    """Leading-order interior temperature: ``(T + 4*pi/3*T**4)`` is linear in x."""
    if bc.left < 0 or bc.right < 0:
        raise InvalidArgumentError("boundary temperatures must be non-negative")
    x = mesh.nodes / mesh.length
    u_left = bc.left + FOUR_PI_THIRD * bc.left**4
    u_right = bc.right + FOUR_PI_THIRD * bc.right**4
    u = u_left + (u_right - u_left) * x
    t = invert_quartic_map(u)
    t[0], t[-1] = bc.left, bc.right
    return t


def solve_nonlinear_temperature(eps, rhs_moment, bc: DirichletBC, mesh: Mesh1D, tol=1e-12,
                                max_iter=100, full_output=False, theta0=None):
    """Newton solve of ``eps^2 theta'' - 4 pi theta^4 = -rhs_moment``.

    Parameters
    ----------
    eps : float
    rhs_moment : array_like
        Angular moment of the radiation intensity, non-negative per node.
    bc : DirichletBC
    mesh : Mesh1D
    tol : float
        Stop once the sup-norm of the interior residual, divided by the
        Jacobian diagonal (so it is measured in temperature units), drops
        below ``tol``.
    max_iter : int
    full_output : bool
        Also return the list of residual norms, one per Newton iterate.
    theta0 : array_like, optional
        Initial guess; defaults to the local equilibrium ``(m / 4 pi)**(1/4)``.

    Returns
    -------
    theta : numpy.ndarray
    trace : list of float
        Only when ``full_output`` is true.
    """
    if not eps > 0:
        raise InvalidArgumentError(f"eps must be positive, got {eps}")
    n = mesh.n
    m = _as_field(rhs_moment, n, "rhs_moment")
    if np.any(m < 0):
        raise InvalidArgumentError("radiation moment must be non-negative")
    if bc.left < 0 or bc.right < 0:
        raise InvalidArgumentError("boundary temperatures must be non-negative")
    x = mesh.nodes
    four_pi = 4.0 * math.pi
    e2 = eps * eps
    lo, d, up = laplacian_coefficients(x)

    theta = (m / four_pi) ** 0.25 if theta0 is None else _as_field(theta0, n, "theta0").copy()
    theta[0], theta[-1] = bc.left, bc.right

    def residual(th):
        return e2 * apply_laplacian(th, x) - four_pi * th[1:-1] ** 4 + m[1:-1]

    def scaled(r, th):
        return float(np.max(np.abs(r / (e2 * d - 4.0 * four_pi * th[1:-1] ** 3)))) if r.size else 0.0

    ab = np.zeros((3, n - 2))
    trace = []
    r = residual(theta)
    trace.append(scaled(r, theta))
    for _ in range(max_iter):
        if trace[-1] < tol:
            break
        ab[0, 1:] = e2 * up[:-1]
        ab[1] = e2 * d - 4.0 * four_pi * theta[1:-1] ** 3
        ab[2, :-1] = e2 * lo[1:]
        delta = solve_banded((1, 1), ab, -r, check_finite=False)
        theta[1:-1] += delta
        r = residual(theta)
        trace.append(scaled(r, theta))
    else:
        if trace[-1] >= tol:
            raise SolverFailure(
                f"Newton did not reach residual {tol:g} in {max_iter} iterations "
                f"(last residual {trace[-1]:.3e})",
                trace,
            )
    if full_output:
        return theta, trace
    return theta
