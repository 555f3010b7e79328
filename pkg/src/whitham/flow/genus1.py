"""Delaunay branches: spectral genus 1.

The spectral curve is ``C / (Z + tau_s Z)`` with the degree-two map
``lambda = c / (wp - e3)`` and ``y^2 = lambda (lambda - r)(lambda - 1/r)``.
The unit circle lifts to C+ = {s + tau_s/4} and C- = {s - tau_s/4}.

In the normalized coordinate (Jacobian lattice Z + tau Z) chi is

    chi_n = chi_hat + y (mu / (lambda - 1/r) + f(lambda)),
    chi_hat(xi) = int_0^xi (a wp(z - tau_s/2) + b) dz,
    a = -tau_s / (pi i),   b = -2 eta3 / (pi i),

and the dwbar coefficient is ``chi = pi i / (2 tau) chi_n``.  The term with
``mu`` is the odd meromorphic function with poles over lambda = 1/r and
lambda = inf; it carries the slowly decaying part of the correction, so the
polynomial ``f`` stays short.

Along C+ the single-valued part of alpha is

    alpha^rho = alpha_n - chi_hat(xi - tau_s/2),

where ``alpha_n = (2 tau / (pi i)) alpha^u(chi)``.  ``G = alpha^rho / y`` is a
function of lambda.  A state solves the flow equations when G extends to the
unit disc with simple poles at lambda = 0 and lambda = r only, i.e.

    G_(-k) = g_(-1) delta_(k,1) + sqrt(c) R r^(k-1),   k >= 1,

where ``R`` is the residue of alpha^rho at the branch point [1/2] in the
coordinate xi.  The residue is tied to the pole expansion of alpha at the
lattice point chi([1/2]) by ``R x1 = sign kappa rho`` with
``kappa = 2 Im(tau) / pi`` and ``x1 = chi_n'(1/2)``; ``sign = +1`` is the
stable branch.  The Sym point xi_1 = s_1 + tau_s/4 must satisfy
``chi_n(xi_1) = (1 + tau)/2 mod Z + tau Z``.  The domain modulus tau is
fixed by the seed while tau_s moves.
"""

from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq

from ..elliptic import DomainError, eta_constants, half_period_values, wp, wp_zeta
from ..mehta_seshadri import (SolverError, lattice_distance, ms_alpha_batch,
                              ms_alpha_continued, ms_linearization)
from ..moduli import SpectralCurve, genus1_lambda, genus1_y
from .state import (BifurcationProximityError, ChiSeries, FlowError, FlowState,
                    TurningPointError)

__all__ = [
    "DelaunayBase",
    "delaunay_base",
    "delaunay_seed",
    "chi_eval",
    "chi_normalized",
    "sample_points",
    "alpha_samples",
    "g_modes",
    "flow_residual",
    "correct",
    "flow_step",
    "refine",
    "x1_coefficient",
]

DEFAULT_M = 13
DEFAULT_N = 128
NEWTON_TOL = 1e-10
ACCEPT_TOL = 1e-8
LATTICE_CLEARANCE = 1e-3
BOOTSTRAP_STEP = 1e-4
MIN_TAU_SPEC = 0.05
MAX_TAU_SPEC = 8.0
# |d Im tau_s / d rho| beyond which the branch is treated as turning back.
FOLD_SLOPE = 250.0


@dataclass(frozen=True)
class DelaunayBase:
    """Base map data of the Delaunay seed for one tau_s.

    ``periods`` holds the numerically integrated periods of
    (a wp(z - tau_s/2) + b) dz over the 1-cycle and the tau_s-cycle.
    """

    tau_spec: complex
    a: float
    b: float
    s0: float
    h: float
    tau_from_spec: complex
    area: float
    periods: tuple


class _Curve:
    """Cached curve constants for one tau_s."""

    def __init__(self, tau_spec):
        ts = complex(tau_spec)
        if abs(ts.real) > 1e-14 or not ts.imag > 0:
            raise DomainError(f"tau_spec must be purely imaginary, got {ts!r}")
        self.ts = ts
        self.curve = SpectralCurve("genus1", ts)
        self.r = float(np.real(self.curve.r))
        self.c = self.curve.c
        self.sc = np.sqrt(self.c)
        self.eta1, self.eta3 = eta_constants(ts)
        self.a = -ts / (np.pi * 1j)
        self.b = -2 * self.eta3 / (np.pi * 1j)
        e1, e2, e3 = half_period_values(ts)
        self.e = (e1, e2, e3)
        # y'(1/2) from wp''(1/2) = 2 (e1 - e2)(e1 - e3)
        self.dy_half = -self.sc * (e1 - e2) / (e1 - e3)

    def chi_hat(self, xi):
        xi = np.asarray(xi, dtype=complex)
        return -self.a * (wp_zeta(xi - self.ts / 2, self.ts) + self.eta3) + self.b * xi

    def lam(self, xi):
        return genus1_lambda(xi, self.curve)

    def y(self, xi):
        return genus1_y(xi, self.curve)


_CURVES = {}


def _curve(tau_spec):
    key = complex(tau_spec)
    if key not in _CURVES:
        if len(_CURVES) > 64:
            _CURVES.clear()
        _CURVES[key] = _Curve(key)
    return _CURVES[key]


def delaunay_base(tau_spec):
    """Base map of the Delaunay seed.

    Returns the constants a, b, the Sym preimage parameter s0 (the first
    s in (0, 1/2) with Re chi_hat(s + tau_s/4) = 1/2), h = Im chi_hat there,
    the domain modulus tau = 2 h i and the area ``|8 i tau a b|``.

    Raises
    ------
    RuntimeError
        If the numerical periods differ from (2, 0) by more than 1e-8.
    """
    cv = _curve(tau_spec)
    ts = cv.ts
    a, b = float(cv.a.real), float(cv.b.real)
    periods = (_period(cv, ts / 4, 1.0), _period(cv, 0.25, ts))
    err = max(abs(periods[0] - 2), abs(periods[1]))
    if err > 1e-8:
        raise RuntimeError(f"period check failed for tau_spec = {ts!r} (error {err:.2e})")
    if not b > 0:
        raise DomainError(f"no Delaunay base map for tau_spec = {ts!r} (b = {b:.4g})")

    def f(s):
        return float(cv.chi_hat(s + ts / 4).real) - 0.5

    grid = np.linspace(1e-9, 0.5, 513)
    vals = np.array([f(s) for s in grid])
    idx = np.flatnonzero(np.sign(vals[:-1]) != np.sign(vals[1:]))
    if idx.size == 0:
        raise DomainError(f"Sym preimage not found for tau_spec = {ts!r}")
    i = int(idx[0])
    s0 = brentq(f, grid[i], grid[i + 1], xtol=1e-15, rtol=1e-15)
    h = float(cv.chi_hat(s0 + ts / 4).imag)
    if not h > 0:
        raise DomainError(f"degenerate Delaunay base for tau_spec = {ts!r}")
    tau = 2j * h
    area = abs(8j * tau * a * b)
    return DelaunayBase(ts, a, b, float(s0), h, tau, float(area), periods)


def _period(cv, start, d):
    """Integral of (a wp(z - tau_s/2) + b) dz along start -> start + d."""
    def part(t, k):
        v = (cv.a * wp(start + t * d - cv.ts / 2, cv.ts) + cv.b) * d
        return float(v.real if k == 0 else v.imag)

    re = quad(part, 0, 1, args=(0,), epsabs=1e-13, epsrel=1e-13, limit=200)[0]
    im = quad(part, 0, 1, args=(1,), epsabs=1e-13, epsrel=1e-13, limit=200)[0]
    return complex(re, im)


def _split(coeffs):
    c = np.asarray(coeffs, dtype=float)
    return c[0], c[1:]


def _poly(f, lam):
    lam = np.asarray(lam, dtype=complex)
    acc = np.zeros_like(lam)
    for fk in f[::-1]:
        acc = acc * lam + fk
    return acc


def chi_normalized(state, xi):
    """chi in the normalized coordinate, Jacobian lattice Z + tau Z."""
    cv = _curve(state.tau_spec)
    mu, f = _split(state.coeffs)
    xi = np.asarray(xi, dtype=complex)
    lam = cv.lam(xi)
    out = cv.chi_hat(xi) + cv.y(xi) * (mu / (lam - 1 / cv.r) + _poly(f, lam))
    return complex(out) if out.ndim == 0 else out


def chi_eval(state, xi):
    """chi(xi) in the d wbar trivialization."""
    return np.pi * 1j / (2 * state.tau) * chi_normalized(state, xi)


def x1_coefficient(state):
    """x1 = d chi_n / d xi at the branch point [1/2]."""
    cv = _curve(state.tau_spec)
    mu, f = _split(state.coeffs)
    r = cv.r
    lin = cv.a * wp(0.5 - cv.ts / 2, cv.ts) + cv.b
    return float((lin + cv.dy_half * (mu / (r - 1 / r) + _poly(f, r))).real)


def sample_points(tau_spec, N):
    """s_j + tau_s / 4 with s_j = (j + 1/2) / N on C+."""
    return (np.arange(N) + 0.5) / N + complex(tau_spec) / 4


def _n_samples(state):
    return int(state.diagnostics.get("N", DEFAULT_N))


def _check_clearance(chi, tau):
    d = lattice_distance(chi, tau)
    if np.min(d) < LATTICE_CLEARANCE:
        j = int(np.argmin(d))
        raise BifurcationProximityError(
            f"chi meets the Jacobian lattice near sample {j} (distance {d[j]:.2e})",
            diagnostics={"sample": j, "distance": float(d[j])})


def _spikes(corr):
    """Indices where a periodic sample sequence has an isolated jump."""
    e = np.abs(corr - 0.5 * (np.roll(corr, 1) + np.roll(corr, -1)))
    ref = np.maximum(np.roll(e, 2), np.roll(e, -2))
    return np.flatnonzero((e > 4 * ref) & (e > 1e-9))


def _offset(state, alpha):
    """alpha - conj(chi) on the samples; the warm start kept in ``cache``."""
    return alpha - np.conj(chi_eval(state, sample_points(state.tau_spec, len(alpha))))


def alpha_samples(state, N=None, seed=None, tol=1e-12):
    """alpha^u(chi) in the d w trivialization along the samples on C+.

    Only the first half is solved; the reflection s -> -s gives the rest
    through alpha(1 - conj xi) = -conj alpha(xi) + pi i / tau, the shift
    being the image of the period 1 of chi_n.

    The warm start is the cached offset alpha - conj(chi).  Near the
    half-lattice points the unitarity equations have a second root close
    by; samples whose offset jumps off the smooth curve are re-solved by
    continuation in rho.
    """
    N = _n_samples(state) if N is None else int(N)
    h = N // 2
    xi = sample_points(state.tau_spec, N)
    chi = chi_eval(state, xi)
    _check_clearance(chi[:h], state.tau)
    if seed is None and state.cache is not None and len(state.cache) == N:
        seed = np.conj(chi[:h]) + np.asarray(state.cache)[:h]
    if seed is None:
        a = ms_alpha_continued(state.rho, chi[:h], state.tau, tol=tol)
    else:
        a = ms_alpha_batch(state.rho, chi[:h], state.tau, seed, tol=tol)
    full = np.concatenate([a, -np.conj(a[::-1]) + np.pi * 1j / state.tau])
    bad = _spikes(full - np.conj(chi))
    bad = np.unique(np.where(bad < h, bad, N - 1 - bad))
    if bad.size and seed is not None:
        a[bad] = ms_alpha_continued(state.rho, chi[bad], state.tau, tol=tol)
        full = np.concatenate([a, -np.conj(a[::-1]) + np.pi * 1j / state.tau])
    return full


def _geometry(tau_spec, N):
    cv = _curve(tau_spec)
    xi = sample_points(tau_spec, N)
    lam = cv.lam(xi)
    y = cv.y(xi)
    dlam = 2 * cv.sc * y
    winding = np.rint((np.sum(dlam / lam) / (2j * np.pi * N)).real)
    return cv, xi, lam, y, dlam, winding


def _mode_weights(lam, dlam, winding, N, k):
    """Quadrature weights for the Laurent modes G_(-k), shape (N, len(k))."""
    k = np.asarray(k)
    return lam[:, None] ** (k[None, :] - 1) * dlam[:, None] / (2j * np.pi * N * winding)


def _G(state, alpha, geo):
    cv, xi, lam, y, dlam, winding = geo
    alpha_n = 2 * state.tau / (np.pi * 1j) * alpha
    return (alpha_n - cv.chi_hat(xi - cv.ts / 2)) / y


def g_modes(state, N=None, k_max=None):
    """Negative Laurent modes G_(-1), ..., G_(-k_max) of alpha^rho / y."""
    N = _n_samples(state) if N is None else int(N)
    k_max = N // 2 if k_max is None else int(k_max)
    geo = _geometry(state.tau_spec, N)
    G = _G(state, alpha_samples(state, N), geo)
    ks = np.arange(1, k_max + 1)
    return ks, G @ _mode_weights(geo[2], geo[4], geo[5], N, ks)


def _sym(state):
    """Sym residual in the normalized coordinate, reduced mod Z + tau Z."""
    t = state.tau.imag
    d = chi_normalized(state, state.sym_xi) - (1 + state.tau) / 2
    re = d.real - np.round(d.real)
    im = d.imag - t * np.round(d.imag / t)
    return complex(re, im)


def _residual(state, N, seed=None, alpha=None):
    cv = _curve(state.tau_spec)
    M = len(state.coeffs) - 1
    geo = _geometry(state.tau_spec, N)
    if alpha is None:
        alpha = alpha_samples(state, N, seed=seed)
    G = _G(state, alpha, geo)
    ks = np.arange(1, N // 2 + 1)
    modes = G @ _mode_weights(geo[2], geo[4], geo[5], N, ks)
    target = cv.sc * state.R * cv.r ** (ks - 1)
    dev = modes - target
    eq = dev[1: M + 2].real
    kappa = 2 * state.tau.imag / np.pi
    x1 = x1_coefficient(state)
    res = state.R * x1 - state.sign * kappa * state.rho
    s = _sym(state)
    F = np.concatenate([eq, [res, s.real, s.imag]])
    # Modes near N/2 alias the regular part of G; judge the tail below N/4.
    tail = np.abs(dev[M + 2: N // 4])
    # Residue of alpha^rho at [1/2] refitted from the retained modes.
    w = cv.r ** (ks[1: M + 2] - 1)
    g_fit = float(np.dot(w, modes[1: M + 2].real) / np.dot(w, w))
    R_fit = g_fit / float(cv.sc.real)
    t = state.tau.imag
    info = {
        "alpha": alpha,
        "modes": (ks, modes),
        "diag": {
            "tail_norm": float(tail.max() if tail.size else 0.0),
            "imag_norm": float(np.max(np.abs(modes.imag))),
            "sym_norm": float(abs(s)),
            "g_minus1": float(dev[0].real),
            "x1": x1,
            "R_fit": R_fit,
            "interior_residue": float(np.pi ** 2 * R_fit * x1 / (4 * t * t)),
        },
    }
    return F, info


def flow_residual(state, N=None):
    """Full residual: retained and tail modes up to N/4, residue, Sym."""
    N = _n_samples(state) if N is None else int(N)
    F, info = _residual(state, N)
    cv = _curve(state.tau_spec)
    ks, modes = info["modes"]
    dev = (modes - cv.sc * state.R * cv.r ** (ks - 1))[1: N // 4]
    return np.concatenate([dev.real, dev.imag, F[-3:]])


def _pack(state):
    s1 = (state.sym_xi - state.tau_spec / 4).real
    return np.concatenate([state.coeffs, [state.R, state.tau_spec.imag, s1]])


def _unpack(state, u):
    M1 = len(state.coeffs)
    if not MIN_TAU_SPEC < u[M1 + 1] < MAX_TAU_SPEC:
        raise DomainError(f"tau_spec left the admissible range (Im = {u[M1 + 1]:.3g})")
    ts = 1j * float(u[M1 + 1])
    return state.with_(chi=ChiSeries("genus1", u[:M1]), R=float(u[M1]), tau_spec=ts,
                       sym_xi=complex(float(u[M1 + 2]) + ts / 4))


def _jacobian(state, alpha, N):
    M1 = len(state.coeffs)
    n = M1 + 3
    cv, xi, lam, y, dlam, winding = geo = _geometry(state.tau_spec, N)
    h = N // 2
    scale = np.pi * 1j / (2 * state.tau)
    chi = chi_eval(state, xi[:h])
    L = ms_linearization(state.rho, chi, alpha[:h], state.tau)

    def dalpha_of(dchi):
        # dchi: (h, m) complex -> dalpha on all N samples, (N, m)
        v = np.stack([dchi.real, dchi.imag], axis=1)
        d = np.einsum("hij,hjm->him", L, v)
        d = d[:, 0] + 1j * d[:, 1]
        return np.concatenate([d, -np.conj(d[::-1])], axis=0)

    ks = np.arange(2, M1 + 2)
    W = _mode_weights(lam, dlam, winding, N, ks)
    basis = np.concatenate([(1 / (lam[:h] - 1 / cv.r))[:, None],
                            lam[:h, None] ** np.arange(M1 - 1)[None, :]], axis=1)
    dchi_c = scale * y[:h, None] * basis
    da = dalpha_of(dchi_c)
    dG = (2 * state.tau / (np.pi * 1j)) * da / y[:, None]
    J = np.zeros((n, n))
    J[: M1, :M1] = (W.T @ dG).real
    J[: M1, M1] = -(cv.sc * cv.r ** (ks - 1)).real
    r = cv.r
    J[M1, 0] = state.R * float((cv.dy_half / (r - 1 / r)).real)
    J[M1, 1:M1] = state.R * float(cv.dy_half.real) * r ** np.arange(M1 - 1)
    J[M1, M1] = x1_coefficient(state)
    yl, ll = cv.y(state.sym_xi), cv.lam(state.sym_xi)
    ps = yl * np.concatenate([[1 / (ll - 1 / r)], ll ** np.arange(M1 - 1)])
    J[M1 + 1, :M1] = ps.real
    J[M1 + 2, :M1] = ps.imag

    # tau_s and s1 columns: difference quotients with alpha moved along
    # the linearization, so no further solves are needed.
    u0 = _pack(state)
    F0, _ = _residual(state, N, alpha=alpha)
    for col, step in ((M1 + 1, 1e-6), (M1 + 2, 1e-6)):
        u1 = u0.copy()
        u1[col] += step
        trial = _unpack(state, u1)
        xi1 = sample_points(trial.tau_spec, N)
        dchi = chi_eval(trial, xi1[:h]) - chi
        a1 = alpha + dalpha_of(dchi[:, None])[:, 0]
        F1, _ = _residual(trial, N, alpha=a1)
        J[:, col] = (F1 - F0) / step
    return J, dalpha_of, geo


def correct(state, N=None, tol=NEWTON_TOL, max_iter=15):
    """Damped Newton on the square genus-1 system at fixed rho."""
    N = _n_samples(state) if N is None else int(N)
    F, info = _residual(state, N)
    norm = np.linalg.norm(F)
    it = 0
    while norm > tol and it < max_iter:
        it += 1
        J, dalpha_of, _ = _jacobian(state, info["alpha"], N)
        if not np.all(np.isfinite(J)):
            raise FlowError("non-finite Jacobian", {"residual_norm": float(norm),
                                                    "iterations": it})
        du = -np.linalg.lstsq(J, F, rcond=1e-14)[0]
        u0 = _pack(state)
        t = 1.0
        for _ in range(8):
            trial = _unpack(state, u0 + t * du)
            try:
                F_new, info_new = _residual(trial, N)
            except (SolverError, DomainError, BifurcationProximityError):
                t /= 2
                continue
            if np.linalg.norm(F_new) < norm or np.linalg.norm(F_new) < tol:
                break
            t /= 2
        else:
            raise FlowError("Newton line search failed", {"residual_norm": float(norm),
                                                          "iterations": it})
        state, F, info = trial.with_(cache=_offset(trial, info_new["alpha"])), F_new, info_new
        norm = np.linalg.norm(F)
    if not norm < ACCEPT_TOL:
        raise FlowError(f"Newton did not converge (residual {norm:.3e})",
                        {"residual_norm": float(norm), "iterations": it})
    diag = dict(state.diagnostics, residual_norm=float(norm), newton_iterations=it, N=N,
                **info["diag"])
    return state.with_(diagnostics=diag, cache=_offset(state, info["alpha"]))


def delaunay_seed(tau_spec=1j, sign=1, M=DEFAULT_M, N=DEFAULT_N):
    """rho = 0 Delaunay state chi = chi_hat on the branch ``sign``.

    Parameters
    ----------
    tau_spec : complex
        Purely imaginary modulus of the spectral curve.
    sign : {+1, -1}
        Branch; +1 is the stable one.
    M : int
        Number of real unknowns describing the correction (mu and M - 1
        polynomial coefficients).
    N : int
        Samples on C+.
    """
    if sign not in (1, -1):
        raise DomainError("sign must be +1 or -1")
    base = delaunay_base(tau_spec)
    state = FlowState(kind="genus1", rho=0.0, tau=base.tau_from_spec, R=0.0,
                      chi=ChiSeries("genus1", np.zeros(int(M))),
                      sym_xi=complex(base.s0 + base.tau_spec / 4),
                      tau_spec=base.tau_spec, sign=int(sign), diagnostics={"N": int(N)})
    F, info = _residual(state, int(N))
    diag = dict(state.diagnostics, residual_norm=float(np.linalg.norm(F)),
                newton_iterations=0, **info["diag"])
    return state.with_(diagnostics=diag, cache=_offset(state, info["alpha"]))


def _predict(state, drho):
    """Predictor for the next corrector solve.

    R takes one explicit step of ``R' = sign kappa (x1 - rho x1') / x1^2``;
    the other unknowns follow the tangent of the previous step.
    """
    kappa = 2 * state.tau.imag / np.pi
    x1 = x1_coefficient(state)
    dx1 = state.diagnostics.get("dx1_drho", 0.0)
    dR = state.sign * kappa * (x1 - state.rho * dx1) / x1 ** 2
    du = state.diagnostics.get("du_drho")
    u = _pack(state)
    if du is not None and len(du) == len(u):
        u = u + drho * np.asarray(du)
    u[len(state.coeffs)] = state.R + drho * dR
    return _unpack(state, u).with_(rho=state.rho + drho)


def _substep(state, h, N, auto_refine):
    new = correct(_predict(state, h), N)
    if auto_refine:
        new = refine(new)
    M1 = len(new.coeffs)
    u_old = _pack(state)
    u_old = np.concatenate([u_old[: len(state.coeffs)],
                            np.zeros(M1 - len(state.coeffs)), u_old[len(state.coeffs):]])
    du = (_pack(new) - u_old) / h
    dx1 = (new.diagnostics["x1"] - x1_coefficient(state)) / h
    return new.with_(diagnostics=dict(new.diagnostics, dx1_drho=float(dx1),
                                      du_drho=[float(v) for v in du]))


def _check_turning_point(state):
    du = state.diagnostics.get("du_drho")
    if du is None:
        return
    slope = abs(du[len(state.coeffs) + 1])
    if slope > FOLD_SLOPE:
        raise TurningPointError(
            f"branch turns back in rho near rho = {state.rho:.6g} "
            f"(|d Im tau_s / d rho| = {slope:.3g})",
            dict(state.diagnostics, turning_point=float(state.rho)))


def flow_step(state, drho, max_halvings=6, drho_cap=0.02, auto_refine=True):
    """Advance one Delaunay branch by drho.

    The step is taken in sub-steps.  Without a tangent (the first step from
    rho = 0) the first sub-step has length 1e-4.  A failed sub-step is
    halved, an accepted one lets the next grow back towards drho; six
    consecutive halvings end the step with a FlowError.  A TurningPointError
    is raised when the tangent shows that rho stops increasing along the
    branch, so no solution continues it beyond the current rho.
    """
    if abs(drho) > drho_cap + 1e-15:
        raise DomainError(f"|drho| must not exceed {drho_cap}")
    N = _n_samples(state)
    target = state.rho + float(drho)
    h = float(drho)
    if "du_drho" not in state.diagnostics:
        h = np.copysign(min(BOOTSTRAP_STEP, abs(h)), h)
    failures = 0
    last = None
    while abs(target - state.rho) > 1e-15:
        h = np.copysign(min(abs(h), abs(target - state.rho)), drho)
        try:
            state = _substep(state, h, N, auto_refine)
        except BifurcationProximityError:
            raise
        except (FlowError, SolverError, DomainError) as err:
            last = err
            failures += 1
            if failures > max_halvings:
                _check_turning_point(state)
                du = state.diagnostics.get("du_drho")
                slope = float("nan") if du is None else abs(du[len(state.coeffs) + 1])
                raise FlowError(f"flow step failed after {max_halvings} halvings at "
                                f"rho = {state.rho:.6g} (|d Im tau_s / d rho| = {slope:.3g}): "
                                f"{last}",
                                dict(getattr(last, "diagnostics", {}),
                                     last_rho=float(state.rho), slope=slope)) from err
            h /= 2
            continue
        failures = 0
        _check_turning_point(state)
        h = np.copysign(min(2 * abs(h), abs(drho)), drho)
        N = _n_samples(state)
    return state.with_(rho=target)


def refine(state, max_M=104):
    """Double the number of correction coefficients while the mode tail
    exceeds the acceptance tolerance.  N is doubled only when N < 4 (M + 2).
    """
    while True:
        c = state.coeffs
        M1 = len(c)
        if state.diagnostics.get("tail_norm", 0.0) <= ACCEPT_TOL or 2 * M1 > max_M:
            return state
        c2 = np.concatenate([c, np.zeros(M1)])
        N2 = _n_samples(state)
        while N2 < 4 * (2 * M1 + 2):
            N2 *= 2
        bigger = state.with_(chi=ChiSeries("genus1", c2), cache=None,
                             diagnostics=dict(state.diagnostics, N=N2))
        if N2 == _n_samples(state):
            bigger = bigger.with_(cache=state.cache)
        state = correct(bigger, N2)
