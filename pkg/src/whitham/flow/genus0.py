"""Homogeneous branch: spectral genus 0, lambda = xi^2.

The unknowns are the real coefficients c_1, c_3, ..., c_(2K-1) of

    chi(xi) = sum_k c_(2k-1) xi^(2k-1),

the residue parameter R and the argument phi of the Sym preimage
xi_1 = exp(i phi).  With alpha(xi) = alpha^u_rho(chi(xi)) sampled on the unit
circle, a state solves the flow equations when

* the Laurent modes a_k of alpha vanish for k = -3, -5, ..., -(2K-1),
* a_(-1) = R pi i / (4 tau),
* chi(xi_1) lies in the Sym coset gamma_sym + Lambda.

At rho = 0 alpha = conj(chi), whose modes are a_(-k) = c_k, so the seed
chi = R pi i/(4 tau) xi is an exact solution.
"""

import numpy as np

from ..elliptic import DomainError
from ..mehta_seshadri import (SolverError, lattice_distance, ms_alpha_batch,
                              ms_alpha_continued, ms_linearization)
from ..moduli import jacobian_lattice, sym_target
from .state import BifurcationProximityError, ChiSeries, FlowError, FlowState

__all__ = [
    "homogeneous_seed",
    "chi_eval",
    "sample_points",
    "alpha_samples",
    "alpha_modes",
    "flow_residual",
    "flow_step",
    "sym_residual",
    "correct",
    "refine",
]

DEFAULT_K = 16
NEWTON_TOL = 1e-10
ACCEPT_TOL = 1e-8
LATTICE_CLEARANCE = 1e-3


def homogeneous_seed(tau, spin_gamma=0, K=DEFAULT_K, N=None):
    """rho = 0 state of the homogeneous torus with modulus tau.

    ``chi = R pi i / (4 tau) xi`` with ``R = sqrt(1 + tau conj(tau))``, the
    smallest R at which the image circle meets the Sym coset.

    Parameters
    ----------
    tau : complex
        Purely imaginary with 1 <= Im(tau) < sqrt(3).
    spin_gamma : complex
        Spin shift of chi; only the trivial choice 0 is supported.
    K : int
        Number of odd coefficients.
    N : int, optional
        Circle samples, default 8 K.
    """
    tau = complex(tau)
    if abs(tau.real) > 1e-14 or not (1.0 <= tau.imag < np.sqrt(3.0)):
        raise DomainError(f"homogeneous seed needs tau in i[1, sqrt 3), got {tau!r}")
    if spin_gamma != 0:
        raise DomainError("only the spin choice gamma = 0 is supported")
    t = tau.imag
    R = float(np.sqrt(1.0 + t * t))
    c = np.zeros(int(K))
    c[0] = (R * np.pi * 1j / (4 * tau)).real
    xi1 = (1 + 1j * t) / np.sqrt(1 + t * t)
    N = 8 * int(K) if N is None else int(N)
    state = FlowState(kind="genus0", rho=0.0, tau=tau, R=R, chi=ChiSeries("genus0", c),
                      sym_xi=complex(xi1), diagnostics={"N": N})
    F, info = _residual(state, N)
    diag = dict(state.diagnostics, residual_norm=float(np.linalg.norm(F)),
                newton_iterations=0, **info["diag"])
    return state.with_(diagnostics=diag, cache=info["alpha"])


def chi_eval(state_or_coeffs, xi):
    """chi(xi) = sum c_(2k-1) xi^(2k-1)."""
    c = state_or_coeffs.coeffs if hasattr(state_or_coeffs, "coeffs") else np.asarray(state_or_coeffs)
    xi = np.asarray(xi, dtype=complex)
    x2 = xi * xi
    acc = np.zeros_like(xi)
    for ck in c[::-1]:
        acc = acc * x2 + ck
    out = acc * xi
    return complex(out) if out.ndim == 0 else out


def chi_derivative(c, xi):
    k = 2 * np.arange(len(c)) + 1
    xi = np.asarray(xi, dtype=complex)
    return np.sum(c * k * xi[..., None] ** (k - 1), axis=-1)


def sample_points(N):
    """Circle samples exp(2 pi i (j + 1/2) / N).

    The half-step offset keeps samples off the Sym preimages of the
    square torus, where the trace equations have a double root.
    """
    return np.exp(2j * np.pi * (np.arange(N) + 0.5) / N)


def _n_samples(state):
    return int(state.diagnostics.get("N", 8 * len(state.chi.coeffs)))


def alpha_samples(state, N=None, seed=None, tol=1e-12):
    """alpha^u along the circle samples, using oddness to halve the work."""
    N = _n_samples(state) if N is None else int(N)
    xi = sample_points(N)
    chi = chi_eval(state, xi[: N // 2])
    _check_clearance(chi, state.tau)
    if seed is None and state.cache is not None and len(state.cache) == N:
        seed = np.asarray(state.cache)[: N // 2]
    if seed is None:
        a = ms_alpha_continued(state.rho, chi, state.tau, tol=tol)
    else:
        a = ms_alpha_batch(state.rho, chi, state.tau, seed, tol=tol)
    return np.concatenate([a, -a])


def _check_clearance(chi, tau):
    d = lattice_distance(chi, tau)
    if np.min(d) < LATTICE_CLEARANCE:
        j = int(np.argmin(d))
        raise BifurcationProximityError(
            f"chi meets the Jacobian lattice near sample {j} (distance {d[j]:.2e})",
            diagnostics={"sample": j, "distance": float(d[j])})


def _modes(alpha, N):
    """Laurent modes a_k, k = -N/2 .. N/2 - 1, for the offset grid."""
    k = np.fft.fftfreq(N, 1.0 / N).astype(int)
    a = np.fft.fft(alpha) / N * np.exp(-1j * np.pi * k / N)
    order = np.argsort(k)
    return k[order], a[order]


def alpha_modes(state, N=None):
    """Laurent modes of alpha^rho(chi(xi)) on the unit circle.

    Returns
    -------
    k : ndarray of int
        Mode numbers -N/2 .. N/2 - 1.
    a : ndarray of complex
        Mode values.
    """
    N = _n_samples(state) if N is None else int(N)
    if N < 32 or N & (N - 1):
        raise DomainError("N must be a power of two >= 32")
    return _modes(alpha_samples(state, N), N)


def sym_residual(c, xi1, tau):
    """chi(xi_1) - gamma_sym minus the nearest lattice vector."""
    g1, g2 = jacobian_lattice(tau)
    d = chi_eval(c, xi1) - sym_target(tau)
    det = g1.real * g2.imag - g1.imag * g2.real
    a = (d.real * g2.imag - d.imag * g2.real) / det
    b = (g1.real * d.imag - g1.imag * d.real) / det
    return d - (np.round(a) * g1 + np.round(b) * g2)


def _residual(state, N, seed=None):
    """Square residual used by Newton plus diagnostics."""
    K = len(state.chi.coeffs)
    tau = state.tau
    alpha = alpha_samples(state, N, seed=seed)
    k, a = _modes(alpha, N)
    target = state.R * np.pi * 1j / (4 * tau)
    neg = {kk: aa for kk, aa in zip(k, a) if kk < 0}
    m = [neg[-(2 * j + 1)] for j in range(K)]
    m[0] = m[0] - target
    s = sym_residual(state.coeffs, state.sym_xi, tau)
    F = np.array([mm.real for mm in m] + [s.real, s.imag])
    tail = [abs(neg[kk]) for kk in neg if kk < -(2 * K - 1) and kk % 2]
    even = [abs(aa) for kk, aa in zip(k, a) if kk % 2 == 0]
    info = {
        "alpha": alpha,
        "modes": (k, a),
        "diag": {
            "tail_norm": float(max(tail) if tail else 0.0),
            "imag_norm": float(max(abs(mm.imag) for mm in m)),
            "even_norm": float(max(even)),
            "sym_norm": float(abs(s)),
        },
    }
    return F, info


def flow_residual(state, N=None):
    """Full residual vector of a genus-0 state.

    Concatenates all negative odd Laurent modes except k = -1, the residue
    mismatch a_(-1) - R pi i/(4 tau), and the Sym residual (real and
    imaginary parts).
    """
    N = _n_samples(state) if N is None else int(N)
    _, info = _residual(state, N)
    k, a = info["modes"]
    target = state.R * np.pi * 1j / (4 * state.tau)
    neg = [aa for kk, aa in zip(k, a) if kk < -1 and kk % 2]
    r1 = a[list(k).index(-1)] - target
    s = sym_residual(state.coeffs, state.sym_xi, state.tau)
    parts = [np.asarray(neg).real, np.asarray(neg).imag, [r1.real, r1.imag], [s.real, s.imag]]
    return np.concatenate([np.ravel(p) for p in parts])


def _unpack(state, u):
    K = len(state.chi.coeffs)
    return state.with_(chi=ChiSeries("genus0", u[:K]), R=float(u[K]),
                       sym_xi=complex(np.exp(1j * u[K + 1])))


def _pack(state):
    return np.concatenate([state.coeffs, [state.R, np.angle(state.sym_xi)]])


def _jacobian(state, alpha, N):
    K = len(state.chi.coeffs)
    tau = state.tau
    xi = sample_points(N)
    h = N // 2
    chi = chi_eval(state, xi[:h])
    L = ms_linearization(state.rho, chi, alpha[:h], tau)  # (h, 2, 2)
    powers = xi[:h, None] ** (2 * np.arange(K) + 1)  # dchi/dc
    dchi = np.stack([powers.real, powers.imag], axis=1)  # (h, 2, K)
    dalpha = np.einsum("hij,hjk->hik", L, dchi)
    dalpha = dalpha[:, 0] + 1j * dalpha[:, 1]  # (h, K)
    dalpha = np.concatenate([dalpha, -dalpha], axis=0)
    J = np.zeros((K + 2, K + 2))
    # mode -(2j+1): (1/N) sum alpha xi^(2j+1)
    ks = 2 * np.arange(K) + 1
    E = xi[:, None] ** ks[None, :] / N  # (N, K)
    J[:K, :K] = (E.T @ dalpha).real
    J[0, K] = -(np.pi * 1j / (4 * tau)).real
    # Sym rows
    p1 = state.sym_xi ** ks
    J[K, :K] = p1.real
    J[K + 1, :K] = p1.imag
    dphi = 1j * state.sym_xi * chi_derivative(state.coeffs, state.sym_xi)
    J[K, K + 1] = dphi.real
    J[K + 1, K + 1] = dphi.imag
    return J, dalpha


def correct(state, N=None, tol=NEWTON_TOL, max_iter=12):
    """Damped Newton on the square genus-0 system at fixed rho."""
    N = _n_samples(state) if N is None else int(N)
    F, info = _residual(state, N)
    norm = np.linalg.norm(F)
    it = 0
    while norm > tol and it < max_iter:
        it += 1
        J, dalpha = _jacobian(state, info["alpha"], N)
        du = -np.linalg.solve(J, F)
        u0 = _pack(state)
        t = 1.0
        for _ in range(8):
            trial = _unpack(state, u0 + t * du)
            K = len(state.chi.coeffs)
            seed = info["alpha"][: N // 2] + t * (dalpha[: N // 2] @ du[:K])
            try:
                F_new, info_new = _residual(trial, N, seed=seed)
            except SolverError:
                t /= 2
                continue
            if np.linalg.norm(F_new) < norm or np.linalg.norm(F_new) < tol:
                break
            t /= 2
        else:
            raise FlowError("Newton line search failed", {"residual_norm": float(norm),
                                                          "iterations": it})
        state, F, info = trial.with_(cache=info_new["alpha"]), F_new, info_new
        norm = np.linalg.norm(F)
    if not norm < ACCEPT_TOL:
        raise FlowError(f"Newton did not converge (residual {norm:.3e})",
                        {"residual_norm": float(norm), "iterations": it})
    diag = dict(state.diagnostics, residual_norm=float(norm), newton_iterations=it, N=N,
                **info["diag"])
    return state.with_(diagnostics=diag, cache=info["alpha"])


def refine(state, max_K=128):
    """Double K (and N = 8 K) while the highest coefficient is not negligible.

    The test is |c_(2K-1)| > 1e-10 max |c|, together with the tail of
    alpha's negative modes beyond the retained ones.
    """
    while True:
        c = state.coeffs
        K = len(c)
        big = np.max(np.abs(c))
        tail = state.diagnostics.get("tail_norm", 0.0)
        if (abs(c[-1]) <= 1e-10 * big and tail <= ACCEPT_TOL) or 2 * K > max_K:
            return state
        c2 = np.concatenate([c, np.zeros(K)])
        N2 = 8 * 2 * K
        bigger = state.with_(chi=ChiSeries("genus0", c2), cache=None,
                             diagnostics=dict(state.diagnostics, N=N2))
        state = correct(bigger, N2)


def flow_step(state, drho, max_halvings=6, drho_cap=0.02, auto_refine=True):
    """Advance the genus-0 flow by drho (predictor: hold unknowns).

    After the corrector converges the truncation is doubled if needed, see
    :func:`refine`.
    """
    if abs(drho) > drho_cap + 1e-15:
        raise DomainError(f"|drho| must not exceed {drho_cap}")
    N = _n_samples(state)
    last = None
    h = float(drho)
    for _ in range(max_halvings + 1):
        trial = state.with_(rho=state.rho + h)
        try:
            new = correct(trial, N)
            if auto_refine:
                new = refine(new)
            if abs(drho - h) > 1e-15:
                # Land exactly on the requested rho with the shorter steps.
                return flow_step(new, drho - h, max_halvings, drho_cap, auto_refine)
            return new
        except BifurcationProximityError:
            raise
        except (FlowError, SolverError) as err:
            last = err
            h /= 2
    raise FlowError(f"flow step failed after {max_halvings} halvings: {last}",
                    getattr(last, "diagnostics", {}))
