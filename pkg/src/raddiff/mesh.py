"""Spatial meshes, discrete-ordinates quadrature and grid operators.

All fields in the package are plain NumPy arrays: a scalar field is a
1-D array with one value per mesh node, a kinetic field is a 2-D array of
shape ``(n_nodes, n_angles)`` whose columns follow the ordering of
:attr:`AngularQuadrature.mu`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss

from .errors import InvalidArgumentError

GRADINGS = ("uniform", "layer_graded")


@dataclass(frozen=True)
class Mesh1D:
    """Ordered nodes on ``[0, length]`` with node 0 on the left boundary."""

    nodes: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.nodes, dtype=float)
        if x.ndim != 1 or x.size < 2:
            raise InvalidArgumentError("a mesh needs at least two nodes")
        if x[0] != 0.0:
            raise InvalidArgumentError("first mesh node must be 0")
        if np.any(np.diff(x) <= 0.0):
            raise InvalidArgumentError("mesh nodes must be strictly increasing")
        x.setflags(write=False)
        object.__setattr__(self, "nodes", x)

    @property
    def n(self) -> int:
        return self.nodes.size

    @property
    def length(self) -> float:
        return float(self.nodes[-1])

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.nodes)

    def count_in(self, lo: float, hi: float) -> int:
        """Number of nodes in the closed interval ``[lo, hi]``."""
        return int(np.count_nonzero((self.nodes >= lo) & (self.nodes <= hi)))


@dataclass(frozen=True)
class AngularQuadrature:
    """Symmetric Gauss-Legendre ordinates in ``mu`` on ``(-1, 1)``.

    Nodes are sorted ascending, so the first half holds the negative
    directions and the second half the positive ones.
    """

    mu: np.ndarray
    weights: np.ndarray
    pos: np.ndarray = field(init=False, repr=False)
    neg: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if mu.shape != w.shape or mu.ndim != 1:
            raise InvalidArgumentError("nodes and weights must be 1-D and equally long")
        if np.any(mu == 0.0):
            raise InvalidArgumentError("quadrature may not contain mu = 0")
        if np.any(w <= 0.0):
            raise InvalidArgumentError("quadrature weights must be positive")
        pos = np.flatnonzero(mu > 0)
        neg = np.flatnonzero(mu < 0)
        if pos.size != neg.size:
            raise InvalidArgumentError("quadrature must have as many positive as negative nodes")
        for arr in (mu, w, pos, neg):
            arr.setflags(write=False)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "pos", pos)
        object.__setattr__(self, "neg", neg)

    @property
    def m(self) -> int:
        return self.mu.size

    def angular_moment(self, power: int) -> float:
        """Discrete value of ``<mu**power>`` (the bracket includes the 2*pi factor)."""
        return 2.0 * math.pi * float(np.sum(self.weights * self.mu**power))


def build_mesh(n_bulk, n_layer, eps, grading="uniform", length=1.0, *, ratio=1.15, layer_width=5.0):
    """Build a 1-D mesh, optionally graded towards ``x = 0``.

    Parameters
    ----------
    n_bulk : int
        Uniform grading: number of nodes. Layer grading: the bulk cell width
        is ``length / (n_bulk - 1)``.
    n_layer : int
        Number of geometrically stretched cells covering ``[0, layer_width*eps]``.
    eps : float
        Layer thickness scale.
    grading : {"uniform", "layer_graded"}
    length : float
        Domain length.
    ratio : float
        Largest geometric stretching ratio between neighbouring cells; it is
        lowered when the last stretched cell would exceed the bulk width.
    layer_width : float
        Extent of the stretched region in units of ``eps``.

    Returns
    -------
    Mesh1D
    """
    if not (length > 0 and math.isfinite(length)):
        raise InvalidArgumentError(f"length must be positive, got {length}")
    if not (eps > 0 and math.isfinite(eps)):
        raise InvalidArgumentError(f"eps must be positive, got {eps}")
    if grading not in GRADINGS:
        raise InvalidArgumentError(f"unknown grading {grading!r}")
    if n_bulk < 2 or n_layer < 0:
        raise InvalidArgumentError("need n_bulk >= 2 and n_layer >= 0")
    if ratio < 1.0:
        raise InvalidArgumentError("ratio must be >= 1")

    if grading == "uniform" or n_layer == 0:
        return Mesh1D(np.linspace(0.0, length, int(n_bulk)))

    h_bulk = length / (n_bulk - 1)
    extent = min(layer_width * eps, 0.5 * length)
    def layer_widths(r):
        if r == 1.0:
            return np.full(n_layer, extent / n_layer)
        h0 = extent * (r - 1.0) / (r**n_layer - 1.0)
        return h0 * r ** np.arange(n_layer)

    widths = layer_widths(ratio)
    if widths[-1] > h_bulk and ratio > 1.0:
        # the stretched cells must not outgrow the bulk spacing
        lo, hi = 1.0, ratio
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            lo, hi = (mid, hi) if layer_widths(mid)[-1] <= h_bulk else (lo, mid)
        widths = layer_widths(lo)
    widths = list(widths)
    x = [0.0]
    for h in widths:
        x.append(x[-1] + h)
    x[-1] = extent
    h = widths[-1]
    while h * ratio < h_bulk and x[-1] + h * ratio < length - h_bulk:
        h *= ratio
        x.append(x[-1] + h)
    remaining = length - x[-1]
    n_rest = max(1, math.ceil(remaining / h_bulk - 1e-9))
    tail = x[-1] + remaining * np.arange(1, n_rest + 1) / n_rest
    nodes = np.concatenate([np.asarray(x), tail])
    nodes[-1] = length
    return Mesh1D(nodes)


def gauss_quadrature(n_per_half):
    """Gauss-Legendre ordinates with ``n_per_half`` directions per hemisphere."""
    if n_per_half < 1:
        raise InvalidArgumentError("n_per_half must be >= 1")
    mu, w = leggauss(2 * int(n_per_half))
    order = np.argsort(mu)
    mu, w = mu[order], w[order]
    # enforce exact mirror symmetry so odd moments cancel to round-off
    half = mu.size // 2
    mu[:half] = -mu[half:][::-1]
    w[:half] = w[half:][::-1]
    w *= 2.0 / w.sum()
    return AngularQuadrature(mu, w)


def moment(psi, quad):
    """Angular bracket ``2*pi * sum_j w_j psi(., mu_j)`` of a kinetic field."""
    psi = np.asarray(psi, dtype=float)
    if psi.ndim == 0 or psi.shape[-1] != quad.m:
        raise InvalidArgumentError(
            f"kinetic field has {psi.shape[-1] if psi.ndim else 0} angles, quadrature has {quad.m}"
        )
    return 2.0 * math.pi * (psi @ quad.weights)


# ---------------------------------------------------------------------------
# finite-difference operators on non-uniform meshes


def laplacian_coefficients(x):
    """Three-point second-derivative weights at the interior nodes.

    Returns ``(lower, diag, upper)`` for nodes ``1..n-2``; the stencil is
    exact for quadratics on arbitrary meshes.
    """
    x = np.asarray(x, dtype=float)
    hl = x[1:-1] - x[:-2]
    hr = x[2:] - x[1:-1]
    s = hl + hr
    lower = 2.0 / (hl * s)
    upper = 2.0 / (hr * s)
    diag = -(lower + upper)
    return lower, diag, upper


def apply_laplacian(u, x):
    """Discrete second derivative at interior nodes (axis 0 of ``u``)."""
    u = np.asarray(u, dtype=float)
    lo, d, up = laplacian_coefficients(x)
    shape = (-1,) + (1,) * (u.ndim - 1)
    return lo.reshape(shape) * u[:-2] + d.reshape(shape) * u[1:-1] + up.reshape(shape) * u[2:]


def central_derivative(u, x):
    """Second-order first derivative on a non-uniform mesh.

    Centered three-point weights in the interior, one-sided three-point
    weights at both ends.
    """
    u = np.asarray(u, dtype=float)
    x = np.asarray(x, dtype=float)
    shape = (-1,) + (1,) * (u.ndim - 1)
    out = np.empty_like(u)
    hl = (x[1:-1] - x[:-2]).reshape(shape)
    hr = (x[2:] - x[1:-1]).reshape(shape)
    out[1:-1] = (
        -hr / (hl * (hl + hr)) * u[:-2]
        + (hr - hl) / (hl * hr) * u[1:-1]
        + hl / (hr * (hl + hr)) * u[2:]
    )
    h1, h2 = x[1] - x[0], x[2] - x[1]
    out[0] = (
        -(2 * h1 + h2) / (h1 * (h1 + h2)) * u[0]
        + (h1 + h2) / (h1 * h2) * u[1]
        - h1 / (h2 * (h1 + h2)) * u[2]
    )
    h1, h2 = x[-1] - x[-2], x[-2] - x[-3]
    out[-1] = (
        (2 * h1 + h2) / (h1 * (h1 + h2)) * u[-1]
        - (h1 + h2) / (h1 * h2) * u[-2]
        + h1 / (h2 * (h1 + h2)) * u[-3]
    )
    return out


def trapezoid(f, x):
    """Trapezoidal integral along axis 0."""
    return np.trapezoid(f, x, axis=0) if hasattr(np, "trapezoid") else np.trapz(f, x, axis=0)
