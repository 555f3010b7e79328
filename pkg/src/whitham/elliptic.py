"""Theta, Weierstrass and the meromorphic section beta on complex lattices.

Two lattices appear.  The half lattice ``Z + tau Z`` carries the theta
function used by the rank-2 connection, and the spectral lattice
``Z + tau_spec Z`` carries the Weierstrass functions of a genus-one
spectral curve.

The theta function is normalized as

    theta(w) = exp(i pi w) * theta_1(pi w | tau),

with the odd Jacobi series ``theta_1(z) = 2 sum (-1)^n q^((n+1/2)^2)
sin((2n+1) z)`` and ``q = exp(i pi tau)``.  This choice gives
``theta(w + 1) = theta(w)`` and ``theta(w + tau) = -theta(w) exp(-2 pi i w)``.
Every downstream quantity is a ratio in which the overall constant cancels;
the ``scale`` keyword exists so that this can be tested.
"""

import numpy as np

__all__ = [
    "DomainError",
    "HalfLattice",
    "SpecLattice",
    "theta",
    "theta_deriv0",
    "wp",
    "wp_zeta",
    "wp_prime",
    "eta_constants",
    "half_period_values",
    "beta",
]

# Last retained term is below this fraction of the partial sum.
_SERIES_EPS = 1e-17


class DomainError(ValueError):
    """Raised when an argument lies outside the domain of an operation."""


class HalfLattice:
    """The lattice Z + tau Z with Im(tau) > 0 and |Re(tau)| < 1/2."""

    __slots__ = ("tau",)

    def __init__(self, tau):
        tau = complex(tau)
        if not tau.imag > 0:
            raise DomainError(f"Im(tau) must be positive, got {tau!r}")
        if not abs(tau.real) < 0.5:
            raise DomainError(f"|Re(tau)| must be below 1/2, got {tau!r}")
        self.tau = tau

    def __repr__(self):
        return f"HalfLattice(tau={self.tau!r})"


class SpecLattice:
    """The spectral lattice Z + tau_spec Z."""

    __slots__ = ("tau",)

    def __init__(self, tau):
        tau = complex(tau)
        if not tau.imag > 0:
            raise DomainError(f"Im(tau_spec) must be positive, got {tau!r}")
        self.tau = tau

    def __repr__(self):
        return f"SpecLattice(tau={self.tau!r})"


def _tau_of(L):
    if isinstance(L, (HalfLattice, SpecLattice)):
        return L.tau
    tau = complex(L)
    if not tau.imag > 0:
        raise DomainError(f"Im(tau) must be positive, got {tau!r}")
    return tau


def _n_terms(decay):
    """Number of terms n with exp(-decay * n^2 ...) above the cutoff."""
    return int(np.ceil(np.sqrt(-np.log(_SERIES_EPS) / decay))) + 3


def _reduce(w, tau):
    """Split w = v + m + n tau with v in the centred fundamental cell."""
    w = np.asarray(w, dtype=complex)
    n = np.round(w.imag / tau.imag)
    v = w - n * tau
    m = np.round(v.real)
    v = v - m
    return v, m, n


def _theta1_series(z, tau, d=0):
    """d-th z-derivative of theta_1(z | tau) by the sine series.

    Assumes |Im z| <= pi Im(tau) / 2 (+ small slack), so the series
    converges at least like exp(-pi Im(tau) n^2).
    """
    nmax = _n_terms(np.pi * tau.imag)
    n = np.arange(nmax)
    k = 2 * n + 1
    coef = 2.0 * (-1.0) ** n * np.exp(1j * np.pi * tau * (n + 0.5) ** 2)
    coef = coef * k.astype(float) ** d
    arg = np.multiply.outer(z, k)
    if d % 4 == 0:
        trig = np.sin(arg)
    elif d % 4 == 1:
        trig = np.cos(arg)
    elif d % 4 == 2:
        trig = -np.sin(arg)
    else:
        trig = -np.cos(arg)
    return trig @ coef


def theta(w, L, scale=1.0):
    """Odd-type theta function of Z + tau Z.

    Parameters
    ----------
    w : complex or array_like
        Evaluation point(s).
    L : HalfLattice or complex
        The lattice or its modulus tau.
    scale : complex, optional
        Overall normalization constant (test hook).

    Returns
    -------
    complex or ndarray
        ``theta(w)``, with the quasi-periodicity factor of the argument
        reduction applied exactly.
    """
    tau = _tau_of(L)
    scalar = np.ndim(w) == 0
    v, _, n = _reduce(w, tau)
    base = np.exp(1j * np.pi * v) * _theta1_series(np.pi * v, tau)
    # theta(v + n tau) = theta(v) (-1)^n exp(-2 pi i (n v + tau n (n-1)/2))
    factor = (-1.0) ** n * np.exp(-2j * np.pi * (n * v + tau * n * (n - 1) / 2))
    out = scale * base * factor
    return complex(out) if scalar else out


def theta_deriv0(L, scale=1.0):
    """Derivative of :func:`theta` at w = 0, in the same normalization."""
    tau = _tau_of(L)
    return complex(scale * np.pi * _theta1_series(np.zeros(()), tau, d=1))


def _q2_sums(tau):
    """Return n and q^(2n) / (1 - q^(2n)) for the Lambert-type series."""
    # On the centred cell the trigonometric factors grow like
    # exp(n pi Im tau), so the net decay per term is exp(-n pi Im tau).
    decay = np.pi * tau.imag
    nmax = int(np.ceil(-np.log(_SERIES_EPS) / decay)) + 3
    n = np.arange(1, nmax + 1)
    q2n = np.exp(2j * np.pi * tau * n)
    return n, q2n / (1 - q2n)


def _eta1(tau):
    n, lam = _q2_sums(tau)
    return np.pi ** 2 / 6 * (1 - 24 * np.sum(n * lam))


def _zeta_series(v, tau):
    """zeta(v) on the centred cell (no quasi-period correction)."""
    n, lam = _q2_sums(tau)
    with np.errstate(divide="ignore", invalid="ignore"):
        cot = np.cos(np.pi * v) / np.sin(np.pi * v)
    s = np.sin(2 * np.pi * np.multiply.outer(v, n)) @ (4 * lam)
    return 2 * _eta1(tau) * v + np.pi * (cot + s)


def _wp_series(v, tau):
    n, lam = _q2_sums(tau)
    with np.errstate(divide="ignore", invalid="ignore"):
        csc2 = 1.0 / np.sin(np.pi * v) ** 2
    c = np.cos(2 * np.pi * np.multiply.outer(v, n)) @ (8 * n * lam)
    with np.errstate(invalid="ignore"):
        return -2 * _eta1(tau) + np.pi ** 2 * (csc2 - c)


def _wp_prime_series(v, tau):
    n, lam = _q2_sums(tau)
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.sin(np.pi * v)
        d = -2 * np.pi ** 3 * np.cos(np.pi * v) / s ** 3
    c = np.sin(2 * np.pi * np.multiply.outer(v, n)) @ (16 * np.pi ** 3 * n * n * lam)
    with np.errstate(invalid="ignore"):
        return d + c


def _at_pole(v):
    return np.abs(v) < 1e-14


def wp(z, L):
    """Weierstrass p-function of Z + tau_spec Z.

    Lattice points return ``complex(inf)`` rather than raising.
    """
    tau = _tau_of(L)
    scalar = np.ndim(z) == 0
    v, _, _ = _reduce(z, tau)
    out = np.where(_at_pole(v), complex(np.inf), _wp_series(v, tau))
    return complex(out) if scalar else out


def wp_prime(z, L):
    """Derivative of :func:`wp`; lattice points give ``complex(inf)``."""
    tau = _tau_of(L)
    scalar = np.ndim(z) == 0
    v, _, _ = _reduce(z, tau)
    out = np.where(_at_pole(v), complex(np.inf), _wp_prime_series(v, tau))
    return complex(out) if scalar else out


def wp_zeta(z, L):
    """Weierstrass zeta function with -zeta' = wp.

    Quasi-periods are added exactly: zeta(z + 1) = zeta(z) + 2 eta1 and
    zeta(z + tau) = zeta(z) + 2 eta3.
    """
    tau = _tau_of(L)
    scalar = np.ndim(z) == 0
    v, m, n = _reduce(z, tau)
    eta1, eta3 = eta_constants(tau)
    with np.errstate(invalid="ignore"):
        base = _zeta_series(v, tau) + 2 * m * eta1 + 2 * n * eta3
    out = np.where(_at_pole(v), complex(np.inf), base)
    return complex(out) if scalar else out


def eta_constants(L):
    """Half-period values eta1 = zeta(1/2) and eta3 = zeta(tau_spec/2).

    Both come from the zeta series directly, so the Legendre relation
    is a genuine check rather than an identity of the implementation.
    """
    tau = _tau_of(L)
    eta1 = complex(_zeta_series(np.asarray(0.5 + 0j), tau))
    eta3 = complex(_zeta_series(np.asarray(tau / 2), tau))
    return eta1, eta3


def half_period_values(L):
    """Return (e1, e2, e3) = wp at 1/2, (1 + tau)/2 and tau/2."""
    tau = _tau_of(L)
    return (wp(0.5, tau), wp((1 + tau) / 2, tau), wp(tau / 2, tau))


def beta(x, w, L, scale=1.0):
    """Doubly periodic section beta_x(w) on Z + tau Z.

    ``beta_x(w) = theta(w - x) / theta(w) * exp(2 pi i x (w - conj w) /
    (conj tau - tau))``.  It has a simple zero at ``w = x``, a simple
    pole at ``w = 0`` and satisfies
    ``d beta / d wbar = 2 pi i x / (tau - conj tau) * beta``.

    Raises
    ------
    DomainError
        If x lies on the lattice, where the section degenerates.
    """
    tau = _tau_of(L)
    x = complex(x)
    v, _, _ = _reduce(x, tau)
    if abs(complex(v)) < 1e-12:
        raise DomainError(f"x = {x!r} lies on the lattice Z + tau Z")
    w = np.asarray(w, dtype=complex)
    tb = np.conj(tau)
    num = theta(w - x, tau, scale=scale)
    den = theta(w, tau, scale=scale)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = num / den * np.exp(2j * np.pi / (tb - tau) * x * (w - np.conj(w)))
    return complex(out) if out.ndim == 0 else out
