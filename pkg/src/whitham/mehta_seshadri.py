"""The unitarizable section alpha^u_rho(chi).

For fixed (rho, chi) the unitarizable dw-coefficient alpha is the root of
the imaginary parts of monodromy traces.  Traces are holomorphic in alpha,
so one complex difference quotient per iteration gives the full real
Jacobian: with t' = dt/d alpha,

    d Im t / d Re alpha = Im t',    d Im t / d Im alpha = Re t'.

The generator traces alone degenerate where a generator monodromy is
close to +-Id (lines through half-lattice points at rho = 0), so the
solver uses the overdetermined set tr M1, tr M2, tr M1 M2, tr M1 M2^-1
in a Gauss-Newton iteration.  All solves are batched over samples.
"""

from dataclasses import dataclass

import numpy as np

from .elliptic import DomainError
from .moduli import jacobian_lattice, lattice_coordinates
from .monodromy import monodromy_batch, trace_set

__all__ = [
    "MSSolve",
    "SolverError",
    "ms_alpha",
    "ms_alpha_batch",
    "ms_alpha_circle",
    "ms_alpha_continued",
    "ms_linearization",
    "ms_residue_probe",
    "lattice_distance",
    "lattice_split",
]

LATTICE_GUARD = 1e-6


class SolverError(RuntimeError):
    """Newton iteration did not converge."""

    def __init__(self, message, residual=None, index=None):
        super().__init__(message)
        self.residual = residual
        self.index = index


@dataclass(frozen=True)
class MSSolve:
    """Result of one unitarizability solve."""

    alpha: complex
    iterations: int
    residual_norm: float
    boundary_flag: bool


def lattice_distance(chi, tau):
    """Distance from chi to the nearest point of the Jacobian lattice."""
    g1, g2 = jacobian_lattice(tau)
    chi = np.asarray(chi, dtype=complex)
    det = g1.real * g2.imag - g1.imag * g2.real
    a = (chi.real * g2.imag - chi.imag * g2.real) / det
    b = (g1.real * chi.imag - g1.imag * chi.real) / det
    best = np.full(chi.shape, np.inf)
    for i in (0, 1):
        for j in (0, 1):
            p = (np.floor(a) + i) * g1 + (np.floor(b) + j) * g2
            best = np.minimum(best, np.abs(chi - p))
    return best


def lattice_split(chi, tau):
    """Write chi = chi_r + L with chi_r in the centred cell, L on the lattice."""
    g1, g2 = jacobian_lattice(tau)
    a, b = lattice_coordinates(chi, tau)
    L = np.round(a) * g1 + np.round(b) * g2
    return np.asarray(chi) - L, L


def _traces(rho, chi, alpha, tau, n_steps):
    M1, M2 = monodromy_batch(rho, chi, alpha, tau, n_steps=n_steps)
    return trace_set(M1, M2)


def _fd_step(alpha):
    return 1e-7 * np.maximum(1.0, np.abs(alpha))


def ms_alpha_batch(rho, chi, tau, seed, tol=1e-11, max_iter=50, n_steps=None,
                   return_info=False, reduce=True):
    """Batched Gauss-Newton solve for alpha at many chi.

    Parameters
    ----------
    rho : float
    chi, seed : array_like of complex
        Sample points and starting values of alpha.
    tau : complex
    tol : float
        Target for the max-norm of the imaginary trace parts.
    reduce : bool
        Solve at the representative of chi in the centred cell and shift
        back: alpha(chi + L) = alpha(chi) + conj(L) for lattice vectors L.
        The shift is a gauge symmetry, and the reduced problem keeps the
        transport frames slowly varying.

    Returns
    -------
    alpha : ndarray
        Converged values.  With ``return_info`` also returns per-sample
        iteration counts and residual norms.

    Raises
    ------
    SolverError
        If some sample fails to converge; ``index`` names the first one.
    """
    chi = np.atleast_1d(np.asarray(chi, dtype=complex))
    alpha = np.array(np.broadcast_to(np.asarray(seed, dtype=complex), chi.shape))
    if np.any(lattice_distance(chi, tau) < LATTICE_GUARD):
        raise DomainError("chi sample on the Jacobian lattice")
    if reduce:
        chi, L = lattice_split(chi, tau)
        alpha = alpha - np.conj(L)
    else:
        L = np.zeros_like(chi)
    n = chi.size
    iters = np.zeros(n, dtype=int)
    res = np.full(n, np.inf)
    active = np.ones(n, dtype=bool)
    T = _traces(rho, chi, alpha, tau, n_steps)
    res = np.max(np.abs(T.imag), axis=-1)
    for it in range(max_iter):
        active = res > tol
        if not np.any(active):
            break
        idx = np.flatnonzero(active)
        c, a, Ta = chi[idx], alpha[idx], T[idx]
        h = _fd_step(a)
        Th = _traces(rho, c, a + h, tau, n_steps)
        D = (Th - Ta) / h[:, None]
        J = np.stack([D.imag, D.real], axis=-1)  # (m, 4, 2)
        r = Ta.imag
        JtJ = np.einsum("mki,mkj->mij", J, J)
        Jtr = np.einsum("mki,mk->mi", J, r)
        # Small Tikhonov term guards the exactly degenerate double roots.
        lam = 1e-14 * np.trace(JtJ, axis1=1, axis2=2)[:, None, None] * np.eye(2)
        d = -np.linalg.solve(JtJ + lam, Jtr[..., None])[..., 0]
        dz = d[:, 0] + 1j * d[:, 1]
        old = res[idx]
        t_fac = np.ones(idx.size)
        new_a = a + dz
        new_T = _traces(rho, c, new_a, tau, n_steps)
        new_r = np.max(np.abs(new_T.imag), axis=-1)
        for _ in range(8):
            bad = ~(new_r < old) & (old > tol)
            bad &= np.isfinite(old)
            if not np.any(bad):
                break
            t_fac[bad] /= 2
            bi = np.flatnonzero(bad)
            new_a[bi] = a[bi] + t_fac[bi] * dz[bi]
            new_T[bi] = _traces(rho, c[bi], new_a[bi], tau, n_steps)
            new_r[bi] = np.max(np.abs(new_T[bi].imag), axis=-1)
        alpha[idx] = new_a
        T[idx] = new_T
        res[idx] = new_r
        iters[idx] += 1
        # Stagnation at rounding level counts as converged.
        tiny = np.abs(t_fac * dz) < 1e-14 * np.maximum(1, np.abs(a))
        res[idx[tiny & (new_r < 1e3 * tol)]] = np.minimum(new_r[tiny & (new_r < 1e3 * tol)], tol)
    bad = np.flatnonzero(~(res <= max(tol, 1e-8)))
    if bad.size:
        k = int(bad[0])
        raise SolverError(f"unitarizability solve failed at sample {k} (residual {res[k]:.3e})",
                          residual=float(res[k]), index=k)
    alpha = alpha + np.conj(L)
    if return_info:
        return alpha, iters, res, T
    return alpha


def ms_alpha(rho, chi, tau, seed=None, tol=1e-11, max_iter=50, n_steps=None):
    """Solve for the unitarizable alpha at a single chi.

    Parameters
    ----------
    rho : float
        Cone parameter, |rho| < 1/2.
    chi : complex
        Point of the Jacobian (not on the lattice).
    tau : complex
        Domain modulus.
    seed : complex, optional
        Starting value; defaults to the rho = 0 value conj(chi) continued
        in rho.

    Returns
    -------
    MSSolve
    """
    if not abs(rho) < 0.5:
        raise DomainError("|rho| must be below 1/2")
    chi = complex(chi)
    if lattice_distance(chi, tau) < LATTICE_GUARD:
        raise DomainError(f"chi = {chi!r} lies on the Jacobian lattice")
    if seed is None:
        seed = ms_alpha_continued(rho, np.array([chi]), tau, tol=tol, n_steps=n_steps)[0]
    a, it, res, T = ms_alpha_batch(rho, [chi], tau, [seed], tol=tol,
                                   max_iter=max_iter, n_steps=n_steps, return_info=True)
    t12 = T[0, :2].real
    boundary = bool(np.any(np.abs(np.abs(t12) - 2) < 1e-8))
    if np.any(np.abs(t12) > 2 + 1e-8):
        raise SolverError("converged to a real but non-unitary representation",
                          residual=float(res[0]))
    return MSSolve(complex(a[0]), int(it[0]), float(res[0]), boundary)


def ms_alpha_continued(rho, chi, tau, n_rho=None, tol=1e-11, n_steps=None):
    """Solve at many chi by continuation in rho from the rho = 0 value conj(chi)."""
    chi = np.atleast_1d(np.asarray(chi, dtype=complex))
    alpha = np.conj(chi)
    if rho == 0:
        return alpha
    if n_rho is None:
        # Near the lattice alpha grows like rho / dist; keep each step's
        # change of alpha well inside the Newton basin.
        dist = float(np.min(lattice_distance(chi, tau)))
        n_rho = int(np.ceil(max(abs(rho) / 0.01, 5 * abs(rho) / dist)))
        n_rho = max(2, n_rho)
    prev = None
    for r in np.linspace(0, rho, n_rho + 1)[1:]:
        guess = alpha if prev is None else 2 * alpha - prev
        new = ms_alpha_batch(r, chi, tau, guess, tol=tol, n_steps=n_steps)
        prev, alpha = alpha, new
    return alpha


def ms_alpha_circle(rho, chi_samples, tau, tol=1e-11, n_steps=None):
    """alpha^u along an ordered closed sequence of samples.

    The first sample is continued in rho from its rho = 0 value; each later
    sample is seeded by extrapolating the two preceding solutions.
    """
    chi = np.asarray(chi_samples, dtype=complex)
    if np.any(lattice_distance(chi, tau) < LATTICE_GUARD):
        k = int(np.flatnonzero(lattice_distance(chi, tau) < LATTICE_GUARD)[0])
        raise DomainError(f"sample {k} lies on the Jacobian lattice")
    out = np.empty(chi.shape, dtype=complex)
    out[0] = ms_alpha_continued(rho, chi[:1], tau, tol=tol, n_steps=n_steps)[0]
    for j in range(1, chi.size):
        if j >= 2:
            # Extrapolate the offset from conj(chi), which is smooth.
            seed = np.conj(chi[j]) + 2 * (out[j - 1] - np.conj(chi[j - 1])) \
                - (out[j - 2] - np.conj(chi[j - 2]))
        else:
            seed = np.conj(chi[j]) + out[j - 1] - np.conj(chi[j - 1])
        try:
            out[j] = ms_alpha_batch(rho, chi[j:j + 1], tau, [seed], tol=tol,
                                    n_steps=n_steps)[0]
        except SolverError as err:
            raise SolverError(f"circle solve failed at sample {j}", err.residual, j) from err
    return out


def ms_linearization(rho, chi, alpha, tau, n_steps=None):
    """Real derivative of alpha^u with respect to chi at solved samples.

    Returns an array of shape (n, 2, 2) mapping (d Re chi, d Im chi) to
    (d Re alpha, d Im alpha), by the implicit function theorem applied to
    the imaginary trace parts.
    """
    chi = np.atleast_1d(np.asarray(chi, dtype=complex))
    alpha = np.atleast_1d(np.asarray(alpha, dtype=complex))
    T0 = _traces(rho, chi, alpha, tau, n_steps)
    ha = _fd_step(alpha)
    hc = _fd_step(chi)
    Da = (_traces(rho, chi, alpha + ha, tau, n_steps) - T0) / ha[:, None]
    Dc = (_traces(rho, chi + hc, alpha, tau, n_steps) - T0) / hc[:, None]
    Ja = np.stack([Da.imag, Da.real], axis=-1)
    Jc = np.stack([Dc.imag, Dc.real], axis=-1)
    JtJ = np.einsum("mki,mkj->mij", Ja, Ja)
    Jtc = np.einsum("mki,mkj->mij", Ja, Jc)
    return -np.linalg.solve(JtJ, Jtc)


def ms_residue_probe(rho, tau, gamma, eps, n_points=16, tol=1e-11, n_steps=None,
                     return_samples=False):
    """Residue of alpha^u at a lattice point from a small contour.

    Samples chi_k = gamma + eps e^(i phi_k) and returns the contour
    average of (chi_k - gamma)(alpha_k - conj(gamma)), which equals the
    residue up to O(eps) terms.  At rho = 0, alpha = conj(chi) and the
    estimate is eps^2.
    """
    if not 1e-4 < eps < 1e-1:
        raise DomainError("eps must lie in (1e-4, 1e-1)")
    phi = 2 * np.pi * (np.arange(n_points) + 0.5) / n_points
    chi = gamma + eps * np.exp(1j * phi)
    alpha = ms_alpha_continued(rho, chi, tau, tol=tol, n_steps=n_steps)
    prods = (chi - gamma) * (alpha - np.conj(gamma))
    res = complex(np.mean(prods))
    if return_samples:
        return res, prods
    return res
