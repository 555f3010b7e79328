"""Lattice bookkeeping and spectral curves.

The domain torus is ``C / (2Z + 2 tau Z)``.  Holomorphic line bundles of
degree zero are written in the ``d wbar`` trivialization, so the Jacobian
is ``C / Lambda`` with

    Lambda = pi i / (tau - conj tau) Z + pi i tau / (tau - conj tau) Z.

Spectral curves are either the genus-zero curve ``xi^2 = lambda`` or the
genus-one curve ``C / (Z + tau_spec Z)`` with the degree-two map
``lambda = c / (wp - e3)``.
"""

from dataclasses import dataclass, field

import numpy as np

from .elliptic import DomainError, half_period_values, wp, wp_prime

__all__ = [
    "TorusModulus",
    "SpectralCurve",
    "jacobian_lattice",
    "lattice_coordinates",
    "reduce_mod_lattice",
    "sym_target",
    "genus1_lambda",
    "genus1_y",
    "circle_samples",
    "real_involution",
]


def jacobian_lattice(tau):
    """Generators (gen1, gen2) of the Jacobian lattice, gen2 / gen1 = tau."""
    tau = complex(tau)
    if not tau.imag > 0:
        raise DomainError(f"Im(tau) must be positive, got {tau!r}")
    d = tau - tau.conjugate()
    return np.pi * 1j / d, np.pi * 1j * tau / d


@dataclass(frozen=True)
class TorusModulus:
    """Domain torus C/(2Z + 2 tau Z) together with its Jacobian lattice."""

    tau: complex
    jac_gen1: complex = field(init=False)
    jac_gen2: complex = field(init=False)

    def __post_init__(self):
        g1, g2 = jacobian_lattice(self.tau)
        object.__setattr__(self, "tau", complex(self.tau))
        object.__setattr__(self, "jac_gen1", g1)
        object.__setattr__(self, "jac_gen2", g2)


def lattice_coordinates(chi, tau):
    """Real coordinates (a, b) with chi = a gen1 + b gen2."""
    g1, g2 = jacobian_lattice(tau)
    chi = np.asarray(chi, dtype=complex)
    # Solve the real 2x2 system [g1 g2] (a, b)^T = chi.
    det = g1.real * g2.imag - g1.imag * g2.real
    a = (chi.real * g2.imag - chi.imag * g2.real) / det
    b = (g1.real * chi.imag - g1.imag * chi.real) / det
    return a, b


def reduce_mod_lattice(chi, tau, tol=1e-10):
    """Reduce chi to the cell with lattice coordinates in (-1/2, 1/2].

    Returns
    -------
    rep : complex
        Representative of chi modulo the Jacobian lattice.
    is_lattice_point : bool
        True iff chi lies within ``tol`` of the lattice.
    """
    g1, g2 = jacobian_lattice(tau)
    a, b = lattice_coordinates(chi, tau)
    a = a - np.ceil(a - 0.5)
    b = b - np.ceil(b - 0.5)
    rep = complex(a * g1 + b * g2)
    # Distance to the nearest lattice point; the four cell corners suffice
    # for the centred cell of a lattice that is not too skew.
    dist = min(abs(rep - (i * g1 + j * g2)) for i in (-1, 0, 1) for j in (-1, 0, 1))
    return rep, bool(dist < tol)


def sym_target(tau):
    """Half-lattice point pi i (1 + tau) / (2 (tau - conj tau))."""
    g1, g2 = jacobian_lattice(tau)
    return (g1 + g2) / 2


class SpectralCurve:
    """Spectral curve of genus 0 or 1.

    Parameters
    ----------
    kind : {"genus0", "genus1"}
    tau_spec : complex, optional
        Modulus of ``Z + tau_spec Z``; required for genus 1.

    Notes
    -----
    For genus 1 the branch values are ``lambda(0) = 0``, ``lambda(1/2) = r``,
    ``lambda((1 + tau_spec)/2) = 1/r`` and ``lambda(tau_spec/2) = inf``.
    """

    def __init__(self, kind, tau_spec=None):
        if kind not in ("genus0", "genus1"):
            raise DomainError(f"unknown spectral curve kind {kind!r}")
        self.kind = kind
        self.tau_spec = None
        self.r = None
        if kind == "genus1":
            if tau_spec is None:
                raise DomainError("genus-one curve needs tau_spec")
            ts = complex(tau_spec)
            if not ts.imag > 0:
                raise DomainError(f"Im(tau_spec) must be positive, got {ts!r}")
            e1, e2, e3 = half_period_values(ts)
            self.tau_spec = ts
            self.e = (e1, e2, e3)
            self.c = np.sqrt((e1 - e3) * (e2 - e3))
            r = np.sqrt((e2 - e3) / (e1 - e3))
            self.r = float(r.real) if abs(r.imag) < 1e-12 else complex(r)

    def __repr__(self):
        if self.kind == "genus0":
            return "SpectralCurve('genus0')"
        return f"SpectralCurve('genus1', tau_spec={self.tau_spec!r})"


def _require_genus1(curve):
    if curve.kind != "genus1":
        raise DomainError("operation needs a genus-one spectral curve")


def genus1_lambda(xi, curve):
    """The degree-two map lambda = c / (wp(xi) - e3); poles give inf."""
    _require_genus1(curve)
    p = np.asarray(wp(xi, curve.tau_spec))
    e3 = curve.e[2]
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(np.isinf(p), 0.0, curve.c / (p - e3))
        out = np.where(np.abs(p - e3) < 1e-300, complex(np.inf), out)
    return complex(out) if out.ndim == 0 else out


def genus1_y(xi, curve):
    """Second coordinate y with y^2 = lambda (lambda - r)(lambda - 1/r).

    ``y = -sqrt(c) wp'(xi) / (2 (wp(xi) - e3)^2)``, which is the sign for
    which ``d lambda / d xi = 2 sqrt(c) y``.  y is odd in xi and vanishes
    at the half periods over lambda = 0, r, 1/r.
    """
    _require_genus1(curve)
    p = np.asarray(wp(xi, curve.tau_spec))
    dp = np.asarray(wp_prime(xi, curve.tau_spec))
    e3 = curve.e[2]
    with np.errstate(divide="ignore", invalid="ignore"):
        out = -np.sqrt(curve.c) * dp / (2 * (p - e3) ** 2)
        out = np.where(np.isinf(p), 0.0, out)
    return complex(out) if out.ndim == 0 else out


def circle_samples(curve, N):
    """N points on the preimage of the unit circle.

    Genus 0 uses the roots of unity; genus 1 uses ``s_j + tau_spec/4`` with
    ``s_j = j/N`` on the component C+.
    """
    N = int(N)
    if curve.kind == "genus0":
        if N < 4:
            raise DomainError("need at least four samples")
        return np.exp(2j * np.pi * np.arange(N) / N)
    if N < 8 or N % 2:
        raise DomainError("genus-one sampling needs an even N >= 8")
    return np.arange(N) / N + curve.tau_spec / 4


def real_involution(y, lam):
    """The real involution (y, lambda) -> (-conj(y) conj(lambda)^-2, 1/conj(lambda)).

    On the unit circle y / lambda is purely imaginary, so this is the sign
    that fixes C+ and C- pointwise; composing with y -> -y gives the
    involution exchanging them.
    """
    lam = np.asarray(lam, dtype=complex)
    y = np.asarray(y, dtype=complex)
    return -np.conj(y) / np.conj(lam) ** 2, 1 / np.conj(lam)
