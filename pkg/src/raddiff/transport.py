"""Characteristic sweeps for ``eps*mu*dpsi/dx + psi = S``.

Each cell is integrated exactly with an exponential integrating factor
while the source is taken piecewise linear between nodes, so the
discrete solution is exact whenever ``S`` is piecewise linear on the mesh.
All update coefficients are non-negative, which gives the discrete
maximum principle without any limiter.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numba
import numpy as np

from .errors import InvalidArgumentError
from .mesh import AngularQuadrature, Mesh1D

CLOSURES = ("equilibrium_at_L",)


@dataclass(frozen=True)
class InflowData:
    """Incoming intensities: ``left`` for mu > 0 at x = 0, ``right`` for mu < 0 at the far end.

    Both arrays follow the ordering of ``quad.pos`` / ``quad.neg``.
    ``right`` is ``None`` for half-space problems.
    """

    left: np.ndarray
    right: Optional[np.ndarray] = None

    def __post_init__(self):
        left = np.atleast_1d(np.asarray(self.left, dtype=float))
        if not np.all(np.isfinite(left)):
            raise InvalidArgumentError("inflow values must be finite")
        object.__setattr__(self, "left", left)
        if self.right is not None:
            right = np.atleast_1d(np.asarray(self.right, dtype=float))
            if not np.all(np.isfinite(right)):
                raise InvalidArgumentError("inflow values must be finite")
            object.__setattr__(self, "right", right)

    @classmethod
    def constant(cls, quad, left, right=None):
        half = quad.m // 2
        return cls(np.full(half, float(left)), None if right is None else np.full(half, float(right)))

    @classmethod
    def from_function(cls, quad, left_fn, right_fn=None):
        """Evaluate ``left_fn(mu)`` on positive and ``right_fn(mu)`` on negative ordinates."""
        left = np.broadcast_to(left_fn(quad.mu[quad.pos]), (quad.m // 2,)).astype(float)
        right = None
        if right_fn is not None:
            right = np.broadcast_to(right_fn(quad.mu[quad.neg]), (quad.m // 2,)).astype(float)
        return cls(left, right)

    def check(self, quad, need_right):
        half = quad.m // 2
        if self.left.shape != (half,):
            raise InvalidArgumentError(f"left inflow needs {half} values, got {self.left.shape}")
        if need_right:
            if self.right is None or self.right.shape != (half,):
                raise InvalidArgumentError(f"right inflow needs {half} values")


@numba.njit(cache=True)
def _sweep_kernel(e, b, c, S, mu, left_in, right_in, right_from_source):
    n, m = S.shape
    psi = np.empty((n, m))
    ip = 0
    ineg = 0
    for j in range(m):
        if mu[j] > 0.0:
            psi[0, j] = left_in[ip]
            ip += 1
            for i in range(n - 1):
                psi[i + 1, j] = e[i, j] * psi[i, j] + b[i, j] * S[i, j] + c[i, j] * S[i + 1, j]
        else:
            if right_from_source:
                psi[n - 1, j] = S[n - 1, j]
            else:
                psi[n - 1, j] = right_in[ineg]
            ineg += 1
            for i in range(n - 2, -1, -1):
                psi[i, j] = e[i, j] * psi[i + 1, j] + b[i, j] * S[i + 1, j] + c[i, j] * S[i, j]
    return psi


@numba.njit(cache=True)
def _moment_matrix_kernel(e, b, c, mu, w, right_from_source):
    # rows of the ray response matrices, built by the same recurrence as the sweep
    n = e.shape[0] + 1
    m = mu.size
    K = np.zeros((n, n))
    row = np.zeros(n)
    for j in range(m):
        row[:] = 0.0
        if mu[j] > 0.0:
            K[0, :] += w[j] * row
            for i in range(n - 1):
                for k in range(i + 1):
                    row[k] *= e[i, j]
                row[i] += b[i, j]
                row[i + 1] += c[i, j]
                for k in range(i + 2):
                    K[i + 1, k] += w[j] * row[k]
        else:
            if right_from_source:
                row[n - 1] = 1.0
            K[n - 1, :] += w[j] * row
            for i in range(n - 2, -1, -1):
                for k in range(i + 1, n):
                    row[k] *= e[i, j]
                row[i + 1] += b[i, j]
                row[i] += c[i, j]
                for k in range(i, n):
                    K[i, k] += w[j] * row[k]
    return K


class TransportSweeper:
    """Precomputed cell coefficients for repeated sweeps on one mesh.

    Parameters
    ----------
    eps : float
        Coefficient of the streaming term (1 for half-space problems).
    mesh : Mesh1D
    quad : AngularQuadrature
    """

    def __init__(self, eps: float, mesh: Mesh1D, quad: AngularQuadrature):
        if not eps > 0:
            raise InvalidArgumentError(f"eps must be positive, got {eps}")
        if np.any(quad.mu == 0.0):
            raise InvalidArgumentError("mu = 0 ordinate cannot be swept")
        self.eps = float(eps)
        self.mesh = mesh
        self.quad = quad
        tau = mesh.widths[:, None] / (self.eps * np.abs(quad.mu)[None, :])
        e = np.exp(-tau)
        g = -np.expm1(-tau) / tau
        self._e = np.ascontiguousarray(e)
        self._b = np.ascontiguousarray(g - e)
        self._c = np.ascontiguousarray(1.0 - g)
        self._mu = np.ascontiguousarray(quad.mu)

    def _source(self, source):
        S = np.asarray(source, dtype=float)
        n, m = self.mesh.n, self.quad.m
        if S.ndim == 0:
            return np.full((n, m), float(S))
        if S.ndim == 1:
            if S.shape != (n,):
                raise InvalidArgumentError(f"source has {S.shape[0]} nodes, mesh has {n}")
            S = np.repeat(S[:, None], m, axis=1)
        elif S.shape != (n, m):
            raise InvalidArgumentError(f"source shape {S.shape} does not match ({n}, {m})")
        if not np.all(np.isfinite(S)):
            raise InvalidArgumentError("source must be finite")
        return np.ascontiguousarray(S)

    def sweep(self, source, inflow: InflowData):
        """Solve with inflow on both ends of a finite slab."""
        inflow.check(self.quad, need_right=True)
        S = self._source(source)
        return _sweep_kernel(self._e, self._b, self._c, S, self._mu, inflow.left, inflow.right, False)

    def half_space(self, source, inflow: InflowData):
        """Solve on ``[0, L]`` with incoming mu < 0 values set to the local source at ``L``."""
        inflow.check(self.quad, need_right=False)
        S = self._source(source)
        dummy = np.zeros(self.quad.m // 2)
        return _sweep_kernel(self._e, self._b, self._c, S, self._mu, inflow.left, dummy, True)


    def moment_operator(self, half_space=False):
        """Matrix ``K`` with ``moment(psi) = K @ S`` for an isotropic source ``S`` and zero inflow.

        With ``half_space=True`` the far-end closure of :meth:`half_space`
        is included, so ``K`` is exact for that sweep as well. Cost is
        ``O(n**2 m)``; intended for meshes of a few thousand nodes.
        """
        K = _moment_matrix_kernel(self._e, self._b, self._c, self._mu,
                                  np.ascontiguousarray(self.quad.weights), bool(half_space))
        return 2.0 * np.pi * K


def sweep(eps, source, inflow, mesh, quad):
    """Discrete solution of ``eps*mu*psi' + psi = S`` with inflow on both ends.

    ``source`` is a scalar field (isotropic) or a kinetic field.
    Returns the kinetic field of shape ``(mesh.n, quad.m)``.
    """
    return TransportSweeper(eps, mesh, quad).sweep(source, inflow)


def half_space_sweep(source, inflow_left, mesh, quad, closure="equilibrium_at_L"):
    """Stretched-variable sweep ``mu*psi' + psi = S`` on a truncated half-space."""
    if closure not in CLOSURES:
        raise InvalidArgumentError(f"unknown closure {closure!r}")
    return TransportSweeper(1.0, mesh, quad).half_space(source, inflow_left)
