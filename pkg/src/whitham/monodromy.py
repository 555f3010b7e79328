"""Flat sl(2) connections on the four-punctured torus and their monodromy.

A connection point (rho, chi, alpha) on ``T^2 = C / (2Z + 2 tau Z)`` gives

    A = [[alpha, b(w)], [c(w), -alpha]] dw + diag(-chi, chi) dwbar,

    b(w) = rho theta'(0) / theta(-2x) * beta_{2x}(w),
    c(w) = rho theta'(0) / theta(2x) * beta_{-2x}(w),

with ``x = (tau - conj tau) chi / (2 pi i)``.  Parallel frames solve
``F' = -A(w'(t)) F``.  The connection is holomorphic in (chi, alpha), so
traces of monodromies are holomorphic functions of both.

Two integrators are provided.  :func:`parallel_transport` runs an adaptive
Dormand-Prince 8(5,3) scheme on an arbitrary polyline and serves as the
reference.  :func:`monodromy_batch` runs a sixth-order Magnus scheme that is
vectorized over many connection points at once; the flow code depends on it.
"""

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .elliptic import DomainError, beta, theta, theta_deriv0
from .moduli import jacobian_lattice

__all__ = [
    "ConnectionPoint",
    "MonodromyPair",
    "IntegrationError",
    "PoleError",
    "connection_form",
    "connection_coefficients",
    "parallel_transport",
    "monodromies",
    "monodromy_batch",
    "trace_set",
    "unitarizability_residual",
    "is_unitarizable",
    "unitarizability_status",
    "default_base_point",
]

PUNCTURE_TOL = 1e-6


class PoleError(DomainError):
    """Evaluation too close to a puncture of the connection."""


class IntegrationError(RuntimeError):
    """The transport integrator failed."""


@dataclass(frozen=True)
class ConnectionPoint:
    """Parameters (rho, chi, alpha) of the connection on the torus of modulus tau."""

    rho: float
    chi: complex
    alpha: complex
    tau: complex

    @property
    def x(self):
        return chi_to_x(self.chi, self.tau)


@dataclass(frozen=True)
class MonodromyPair:
    """Monodromies along the generators 2 and 2 tau with their traces."""

    M1: np.ndarray
    M2: np.ndarray

    @property
    def t1(self):
        return complex(np.trace(self.M1))

    @property
    def t2(self):
        return complex(np.trace(self.M2))


def chi_to_x(chi, tau):
    tau = complex(tau)
    return (tau - tau.conjugate()) * np.asarray(chi) / (2j * np.pi)


def _check_x(x, tau):
    """Refuse x with 2x on Z + tau Z (the off-diagonal terms blow up)."""
    y = 2 * np.asarray(x, dtype=complex)
    n = np.round(y.imag / tau.imag)
    v = y - n * tau
    v = v - np.round(v.real)
    if np.any(np.abs(v) < 1e-12):
        raise DomainError("chi lies on the Jacobian lattice; the connection degenerates")


def _puncture_distance(w, tau):
    w = np.asarray(w, dtype=complex)
    n = np.round(w.imag / tau.imag)
    v = w - n * tau
    v = v - np.round(v.real)
    return np.abs(v)


def connection_coefficients(rho, chi, tau, w, scale=1.0):
    """Off-diagonal dw coefficients (b, c) at points w.

    ``chi`` and ``w`` broadcast against each other.
    """
    tau = complex(tau)
    x = chi_to_x(chi, tau)
    if rho == 0:
        z = np.zeros(np.broadcast(x, np.asarray(w)).shape, dtype=complex)
        return z, z.copy()
    _check_x(x, tau)
    d0 = theta_deriv0(tau, scale=scale)
    x = np.asarray(x, dtype=complex)
    w = np.asarray(w, dtype=complex)
    tb = tau.conjugate()
    th_w = theta(w, tau, scale=scale)
    # beta_{+-2x}(w) written out so that all arrays broadcast together
    ph = np.exp(2j * np.pi / (tb - tau) * 2 * x * (w - np.conj(w)))
    bp = theta(w - 2 * x, tau, scale=scale) / th_w * ph
    bm = theta(w + 2 * x, tau, scale=scale) / th_w / ph
    b = rho * d0 / theta(-2 * x, tau, scale=scale) * bp
    c = rho * d0 / theta(2 * x, tau, scale=scale) * bm
    return b, c


def connection_form(P, w, scale=1.0):
    """The dw and dwbar parts of the connection at a point w.

    Raises
    ------
    PoleError
        If w is within 1e-6 of a puncture.
    DomainError
        If chi lies on the Jacobian lattice.
    """
    tau = complex(P.tau)
    if _puncture_distance(w, tau) < PUNCTURE_TOL:
        raise PoleError(f"w = {w!r} is at a puncture")
    if P.rho != 0:
        _check_x(P.x, tau)
    if P.rho == 0:
        b = c = 0j
    else:
        x = complex(P.x)
        d0 = theta_deriv0(tau, scale=scale)
        b = P.rho * d0 / theta(-2 * x, tau, scale=scale) * beta(2 * x, w, tau, scale=scale)
        c = P.rho * d0 / theta(2 * x, tau, scale=scale) * beta(-2 * x, w, tau, scale=scale)
    a = complex(P.alpha)
    A_dw = np.array([[a, b], [c, -a]], dtype=complex)
    A_dwbar = np.array([[-P.chi, 0], [0, P.chi]], dtype=complex)
    return A_dw, A_dwbar


def default_base_point(tau):
    return (1 + complex(tau)) / 2


def parallel_transport(P, path, rtol=1e-11, atol=1e-13, min_distance=0.05):
    """Transport matrix of ``F' = -A F`` along a polyline, starting at Id.

    Parameters
    ----------
    P : ConnectionPoint
    path : sequence of complex
        Polyline vertices.
    rtol, atol : float
        Tolerances of the DOP853 integrator.
    min_distance : float
        Required clearance between the path and the punctures.
    """
    tau = complex(P.tau)
    path = np.asarray(path, dtype=complex)
    if P.rho != 0:
        _check_x(P.x, tau)
    for w0, w1 in zip(path[:-1], path[1:]):
        s = np.linspace(0, 1, 201)
        if np.min(_puncture_distance(w0 + s * (w1 - w0), tau)) < min_distance:
            raise PoleError(f"segment {w0!r} -> {w1!r} passes too close to a puncture")

    F = np.eye(2, dtype=complex)
    for w0, w1 in zip(path[:-1], path[1:]):
        d = w1 - w0
        diag = P.alpha * d - P.chi * np.conj(d)

        def rhs(t, y):
            w = w0 + t * d
            b, c = connection_coefficients(P.rho, P.chi, tau, w)
            B = np.array([[diag, b * d], [c * d, -diag]], dtype=complex)
            return -(B @ y.reshape(2, 2)).ravel()

        sol = solve_ivp(rhs, (0.0, 1.0), np.eye(2, dtype=complex).ravel(),
                        method="DOP853", rtol=rtol, atol=atol)
        if not sol.success:
            raise IntegrationError(f"transport failed on {w0!r} -> {w1!r}: {sol.message}")
        F = sol.y[:, -1].reshape(2, 2) @ F
    return F


def monodromies(P, base=None, method="magnus", n_steps=None):
    """Monodromies along w0 -> w0 + 2 and w0 -> w0 + 2 tau.

    ``method="ode"`` uses :func:`parallel_transport`; the default uses the
    batched Magnus integrator.
    """
    tau = complex(P.tau)
    w0 = default_base_point(tau) if base is None else complex(base)
    if method == "ode":
        M1 = parallel_transport(P, [w0, w0 + 2])
        M2 = parallel_transport(P, [w0, w0 + 2 * tau])
    else:
        M1, M2 = monodromy_batch(P.rho, np.array([P.chi]), np.array([P.alpha]), tau,
                                 base=w0, n_steps=n_steps)
        M1, M2 = M1[0], M2[0]
    return MonodromyPair(M1, M2)


# Sixth-order Magnus scheme with Gauss-Legendre nodes.
_GL = np.array([0.5 - np.sqrt(15) / 10, 0.5, 0.5 + np.sqrt(15) / 10])


def _comm(X, Y):
    return X @ Y - Y @ X


def _expm_sl2(W):
    """exp of traceless 2x2 matrices, exactly unimodular."""
    s2 = W[..., 0, 0] ** 2 + W[..., 0, 1] * W[..., 1, 0]
    s = np.sqrt(s2)
    small = np.abs(s) < 1e-4
    s_safe = np.where(small, 1.0, s)
    sh = np.where(small, 1 + s2 / 6 + s2 ** 2 / 120, np.sinh(s_safe) / s_safe)
    ch = np.cosh(s)
    out = sh[..., None, None] * W
    out[..., 0, 0] += ch
    out[..., 1, 1] += ch
    return out


def default_steps(d, chi, alpha):
    """Magnus steps for a segment of displacement d.

    The diagonal part makes the frames oscillate at a rate proportional to
    |d| (|alpha| + |chi|); about eight steps per unit of that rate keep
    the sixth-order scheme near 1e-12.
    """
    rate = abs(d) * (1.0 + np.max(np.abs(chi)) + np.max(np.abs(alpha)))
    return int(np.clip(np.ceil(max(40.0, 8.0 * rate)), 40, 2000))


def _magnus_segment(rho, chi, alpha, tau, w0, d, n_steps):
    """Batched transport along w0 + s d, s in [0, 1]."""
    n = chi.shape[0]
    h = 1.0 / n_steps
    s = (np.arange(n_steps)[:, None] + _GL[None, :]) * h  # (n_steps, 3)
    w = w0 + s * d
    b, c = connection_coefficients(rho, chi[:, None, None], tau, w[None, :, :])
    diag = alpha * d - chi * np.conj(d)  # (n,)
    # B = -A along the path, shape (n, n_steps, 3, 2, 2)
    B = np.empty((n, n_steps, 3, 2, 2), dtype=complex)
    B[..., 0, 0] = -diag[:, None, None]
    B[..., 1, 1] = diag[:, None, None]
    B[..., 0, 1] = -b * d
    B[..., 1, 0] = -c * d
    A1, A2, A3 = B[:, :, 0], B[:, :, 1], B[:, :, 2]
    a1 = h * A2
    a2 = np.sqrt(15) * h / 3 * (A3 - A1)
    a3 = 10 * h / 3 * (A3 - 2 * A2 + A1)
    C1 = _comm(a1, a2)
    C2 = -_comm(a1, 2 * a3 + C1) / 60
    Om = a1 + a3 / 12 + _comm(-20 * a1 - a3 + C1, a2 + C2) / 240
    E = _expm_sl2(Om)
    F = np.broadcast_to(np.eye(2, dtype=complex), (n, 2, 2)).copy()
    for k in range(n_steps):
        F = E[:, k] @ F
    return F


def monodromy_batch(rho, chi, alpha, tau, base=None, n_steps=None):
    """Generator monodromies for arrays of (chi, alpha) at fixed rho and tau.

    Returns
    -------
    M1, M2 : ndarray, shape (n, 2, 2)
    """
    tau = complex(tau)
    chi = np.atleast_1d(np.asarray(chi, dtype=complex))
    alpha = np.atleast_1d(np.asarray(alpha, dtype=complex))
    chi, alpha = np.broadcast_arrays(chi, alpha)
    w0 = default_base_point(tau) if base is None else complex(base)
    out = []
    for d in (2.0, 2 * tau):
        n = default_steps(d, chi, alpha) if n_steps is None else n_steps
        out.append(_magnus_segment(rho, chi, alpha, tau, w0, d, n))
    return out[0], out[1]


def trace_set(M1, M2):
    """Traces of M1, M2, M1 M2 and M1 M2^-1 (last axis)."""
    inv2 = np.empty_like(M2)
    inv2[..., 0, 0] = M2[..., 1, 1]
    inv2[..., 1, 1] = M2[..., 0, 0]
    inv2[..., 0, 1] = -M2[..., 0, 1]
    inv2[..., 1, 0] = -M2[..., 1, 0]
    tr = lambda M: M[..., 0, 0] + M[..., 1, 1]
    return np.stack([tr(M1), tr(M2), tr(M1 @ M2), tr(M1 @ inv2)], axis=-1)


def unitarizability_residual(P, **kw):
    """(Im t1, Im t2) for the generator monodromies."""
    m = monodromies(P, **kw)
    return m.t1.imag, m.t2.imag


def unitarizability_status(P, tol=1e-8, **kw):
    """Classify the monodromy pair.

    Returns one of ``"unitarizable"``, ``"boundary"`` (real traces with
    |t| = 2 for some generator) or ``"not unitarizable"``.
    """
    m = monodromies(P, **kw)
    t = np.array([m.t1, m.t2])
    if np.any(np.abs(t.imag) > tol) or np.any(np.abs(t.real) > 2 + tol):
        return "not unitarizable"
    if np.any(np.abs(np.abs(t.real) - 2) <= tol):
        return "boundary"
    return "unitarizable"


def is_unitarizable(P, tol=1e-8, **kw):
    """True iff both generator traces are real and in [-2, 2]."""
    return unitarizability_status(P, tol=tol, **kw) != "not unitarizable"
