"""Numerical checks of the spectral assumption on the layer profile and of coercivity.

The spectral assumption asks for ``M < 1`` with

    M int e^{2 tau eta} w^2 |f'|^2  >=  4 int e^{2 tau eta} |w'|^2 f^2,   w = 2 T~_0^{3/2},

for all ``f`` with ``f(0) = 0``. On a P1 finite-element space this is the
generalized eigenproblem ``A f = M B f`` with ``B`` the weighted stiffness
(tridiagonal) and ``A`` the lumped weighted mass (diagonal); the best
constant ``M*`` is its largest eigenvalue. The forms are assembled for
``e^{tau eta} f`` so no exponential weight appears (see
:func:`spectral_forms`).
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg

from .errors import InternalError, InvalidArgumentError, SolverFailure
from .mesh import Mesh1D, central_derivative
from .milne import EXACT, fit_decay_rate

SYMMETRY_TOL = 1e-10


def _jsonable(d):
    out = {}
    for k, v in d.items():
        if isinstance(v, np.ndarray):
            v = v.tolist()
        elif isinstance(v, (np.floating, np.integer)):
            v = v.item()
        if isinstance(v, float) and not math.isfinite(v):
            v = None if math.isnan(v) else ("inf" if v > 0 else "-inf")
        out[k] = v
    return out


@dataclass
class SpectralReport:
    """Outcome of :func:`check_spectral`.

    ``profile`` is the maximizing ``f`` on the mesh nodes (``f(0) = 0``),
    scaled to unit sup norm.
    """

    tau: float
    M_star: float
    passed: bool
    eta: np.ndarray = field(repr=False)
    profile: np.ndarray = field(repr=False)
    iterations: int = 0
    decay_rate: object = None

    def to_dict(self):
        return _jsonable(asdict(self))

    def write_json(self, path, with_profile=False):
        d = self.to_dict()
        if not with_profile:
            d.pop("eta")
            d.pop("profile")
        with open(path, "w") as fh:
            json.dump(d, fh, indent=2, sort_keys=True)
            fh.write("\n")


@dataclass
class CoercivityReport:
    """Outcome of :func:`check_coercivity` for the probe ``kappa``."""

    eps: float
    kappa: float
    C: float
    rho: float
    eigenvalues: list
    passed: bool

    def to_dict(self):
        return _jsonable(asdict(self))

    def write_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


# ---------------------------------------------------------------------------
# spectral assumption


def spectral_forms(T0_profile, tau, mesh: Mesh1D):
    """Assemble ``(A_diag, B_banded)`` on the free nodes ``1..n-1``.

    The forms are written for ``g = e^{tau eta} f``, which turns the
    exponential weights into bounded ones:

        B(g) = int w^2 (g' - tau g)^2,    A(g) = 4 int |w'|^2 g^2.

    The Rayleigh quotient is unchanged, but the matrices stay well
    conditioned on long truncations where ``e^{2 tau L}`` overflows the
    useful precision. ``B`` is P1 with the cell mean of ``w^2`` and is
    integrated exactly otherwise; ``A`` is lumped. ``B_banded`` is in the
    upper form of :func:`scipy.linalg.solveh_banded`.
    """
    eta = mesh.nodes
    T = np.asarray(T0_profile, dtype=float)
    if T.shape != eta.shape:
        raise InvalidArgumentError("profile must be sampled on the mesh nodes")
    if not np.all(T > 0):
        raise InvalidArgumentError("profile must be positive for the weights to be defined")
    w = 2.0 * T**1.5
    dw = central_derivative(w, eta)
    h = np.diff(eta)
    # a flat profile must give A = 0 exactly, not round-off
    dw[np.abs(dw) <= 64 * np.finfo(float).eps * np.max(w) / np.min(h)] = 0.0
    wm = 0.5 * (w[:-1] ** 2 + w[1:] ** 2)
    # cell matrix of int (g' - tau g)^2 over [l, r]
    kll = wm * (1.0 / h + tau + tau**2 * h / 3.0)
    krr = wm * (1.0 / h - tau + tau**2 * h / 3.0)
    klr = wm * (-1.0 / h + tau**2 * h / 6.0)
    diag = np.zeros(eta.size)
    diag[:-1] += kll
    diag[1:] += krr
    B = np.zeros((2, eta.size - 1))
    B[1] = diag[1:]
    B[0, 1:] = klr[1:]
    vol = np.zeros(eta.size)
    vol[:-1] += 0.5 * h
    vol[1:] += 0.5 * h
    A = (4.0 * dw**2 * vol)[1:]
    return A, B


def _sturm_below(A, B, sigma):
    """Number of generalized eigenvalues strictly below ``sigma`` (LDL^T inertia of ``A - sigma B``)."""
    d = A - sigma * B[1]
    e = -sigma * B[0, 1:]
    count = 0
    piv = d[0]
    for i in range(d.size):
        if i > 0:
            piv = d[i] - e[i - 1] ** 2 / piv
        if piv == 0.0:
            piv = -1e-300
        if piv < 0:
            count += 1
    return count


def _largest_eigenpair(A, B, tol=1e-12, max_iter=500):
    """Largest eigenvalue of ``A f = M B f``: power iteration, then shifted inverse iteration.

    The result is confirmed with a Sturm count, which also drives a
    bisection fallback should the iteration lock onto a lower eigenvalue.
    """
    n = A.size
    try:
        cho = scipy.linalg.cholesky_banded(B, lower=False)
    except np.linalg.LinAlgError as exc:
        raise SolverFailure(f"weighted stiffness is not positive definite: {exc}") from None

    def Bmul(v):
        out = B[1] * v
        out[:-1] += B[0, 1:] * v[1:]
        out[1:] += B[0, 1:] * v[:-1]
        return out

    def rq(v):
        return float(v @ (A * v)) / float(v @ Bmul(v))

    v = np.sqrt(np.maximum(A, 0.0)) + 1e-3
    v /= np.linalg.norm(v)
    its = 0
    for its in range(1, 31):
        v = scipy.linalg.cho_solve_banded((cho, False), A * v)
        nv = np.linalg.norm(v)
        if nv == 0:
            return 0.0, np.zeros(n), its
        v /= nv
    M = rq(v)

    def inverse_iteration(shift, v, M):
        ab = np.zeros((3, n))
        for k in range(max_iter):
            ab[1] = A - shift * B[1]
            ab[0, 1:] = -shift * B[0, 1:]
            ab[2, :-1] = -shift * B[0, 1:]
            try:
                y = scipy.linalg.solve_banded((1, 1), ab, Bmul(v), check_finite=False)
            except (np.linalg.LinAlgError, ValueError):
                return M, v, k
            y /= np.linalg.norm(y)
            Mn = rq(y)
            By = Bmul(y)
            # eigen-residual in the B^{-1} norm scale; the Rayleigh quotient alone
            # stalls at round-off once the shifted matrix is nearly singular
            res = np.linalg.norm(A * y - Mn * By) / max(abs(Mn) * np.linalg.norm(By), 1e-300)
            done = abs(Mn - M) <= tol * max(1.0, abs(Mn)) or res <= 1e-10
            v, M = y, Mn
            if done:
                return M, v, k + 1
            shift = M * (1.0 + 1e-10) + 1e-300
        raise SolverFailure(f"shifted inverse iteration did not converge in {max_iter} steps")

    M, v, k = inverse_iteration(M * (1.0 + 1e-6) + 1e-300, v, M)
    its += k
    if _sturm_below(A, B, M * (1.0 + 1e-8) + 1e-300) < n:
        # locked onto an interior eigenvalue: isolate the top one by bisection
        lo, hi = M, max(M, 1.0)
        while _sturm_below(A, B, hi) < n:
            hi *= 2.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if _sturm_below(A, B, mid) < n:
                lo = mid
            else:
                hi = mid
            if hi - lo <= 1e-6 * hi:
                break
        M, v, k = inverse_iteration(hi, v, 0.5 * (lo + hi))
        its += k
    return M, v, its


def check_spectral(T0_profile, tau, mesh: Mesh1D, lam=None, window=(1.0, 30.0)) -> SpectralReport:
    """Best constant ``M*`` of the weighted Hardy-type inequality for a layer profile.

    Parameters
    ----------
    T0_profile : array_like
        Positive layer temperature on ``mesh`` (which starts at ``eta = 0``).
    tau : float
        Exponential weight rate, ``0 < tau < lam``.
    mesh : Mesh1D
    lam : float or "exact", optional
        Decay rate of the profile; fitted from its tail when omitted.

    Raises
    ------
    InvalidArgumentError
        If ``tau`` is not positive or not below the decay rate.
    SolverFailure
        If the weighted stiffness is numerically indefinite.
    """
    T = np.asarray(T0_profile, dtype=float)
    if not tau > 0:
        raise InvalidArgumentError(f"tau must be positive, got {tau}")
    if lam is None:
        far = float(np.mean(T[mesh.nodes >= 0.9 * mesh.nodes[-1]]))
        lam = fit_decay_rate(T, far, window=window, x=mesh.nodes)
    if lam != EXACT and tau >= lam:
        raise InvalidArgumentError(f"tau = {tau:g} must be below the decay rate {lam:g}")
    A, B = spectral_forms(T, tau, mesh)
    if not np.any(A > 0):
        M, v, its = 0.0, np.zeros(A.size), 0
    else:
        M, v, its = _largest_eigenpair(A, B)
    f = np.concatenate([[0.0], v]) * np.exp(-tau * (mesh.nodes - mesh.nodes[0]))
    peak = f[np.argmax(np.abs(f))] if np.any(f) else 1.0
    f = f / peak
    M = max(float(M), 0.0)
    return SpectralReport(float(tau), M, M < 1.0, mesh.nodes.copy(), f, its, lam)


# ---------------------------------------------------------------------------
# coercivity of the linearized temperature operator


def coercivity_forms(T, x):
    """Dense ``(Q, S, N)`` on the interior nodes of ``x`` for P1 functions vanishing at both ends.

    ``Q(g) = int a |g'|^2 - int a' g g'`` with ``a = 4 T^3``; on each cell
    ``a'`` is the difference quotient and ``int g g' = (g_r^2 - g_l^2)/2``.
    """
    x = np.asarray(x, dtype=float)
    a = 4.0 * np.asarray(T, dtype=float) ** 3
    n = x.size
    h = np.diff(x)
    am = 0.5 * (a[:-1] + a[1:])
    da = np.diff(a) / h
    Q = np.zeros((n, n))
    S = np.zeros((n, n))
    Nm = np.zeros((n, n))
    for c in range(n - 1):
        i, j = c, c + 1
        k = 1.0 / h[c]
        for (p, q), s in (((i, i), 1.0), ((j, j), 1.0), ((i, j), -1.0), ((j, i), -1.0)):
            S[p, q] += s * k
            Q[p, q] += s * k * am[c]
        Q[i, i] += 0.5 * da[c]
        Q[j, j] -= 0.5 * da[c]
        m = h[c] / 6.0
        Nm[i, i] += 2 * m
        Nm[j, j] += 2 * m
        Nm[i, j] += m
        Nm[j, i] += m
    sl = slice(1, n - 1)
    return Q[sl, sl], S[sl, sl], Nm[sl, sl]


def coercivity_constant(T, x, kappa=None, n_eigen=1, eps=float("nan")) -> CoercivityReport:
    """Smallest eigenvalues of ``Q - kappa S`` relative to ``N`` for the temperature field ``T``."""
    T = np.asarray(T, dtype=float)
    if kappa is None:
        kappa = float(np.min(2.0 * T**3))
    Q, S, Nm = coercivity_forms(T, x)
    K = Q - kappa * S
    scale = max(1.0, float(np.max(np.abs(K))))
    defect = float(np.max(np.abs(K - K.T))) / scale
    if defect > SYMMETRY_TOL:
        raise InternalError(f"coercivity form is not symmetric (defect {defect:.2e})")
    n_eigen = max(1, min(int(n_eigen), K.shape[0]))
    vals = scipy.linalg.eigh(K, Nm, eigvals_only=True, subset_by_index=[0, n_eigen - 1])
    rho = float(vals[0])
    C = max(0.0, -rho)
    return CoercivityReport(float(eps), float(kappa), C, rho, [float(v) for v in vals],
                            bool(math.isfinite(rho) and kappa > 0))


def check_coercivity(approx, eps=None, n_eigen=1, kappa=None) -> CoercivityReport:
    """Coercivity constants of ``-int 4 (T^a)^3 g g''`` for the composite temperature of ``approx``."""
    eps = approx.eps if eps is None else eps
    return coercivity_constant(approx.T_a, approx.mesh.nodes, kappa, n_eigen, eps)


def tau_default(lam):
    """Half the decay rate; 1/2 when the profile has no layer."""
    return 0.5 if lam == EXACT else 0.5 * float(lam)
