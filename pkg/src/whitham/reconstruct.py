"""From spectral data back to surfaces in S^3.

The immersion is the gauge between the parallel frames of the family of
connections at the two Sym points.  The abelianized connection at a
point xi of the spectral curve is conjugated by

    P(xi) = [[1, 1], [eta, -eta]],

with eta = xi in genus 0 and eta = sqrt(r) y / (lambda - r) in genus 1.  The
result depends only on lambda, and at rho = 0 it is unitary on the unit
circle.  With a unitarizing metric h the vertex at w is

    f(w) = h^(1/2) Phi_1(w)^(-1) Phi_2(w) h^(-1/2),

projected to the nearest element of SU(2); Phi_i transports from the base
point w0 = (1 + tau)/2 along a horizontal-then-vertical staircase.  Points of
S^3 are written as (z1, z2), the first column of [[z1, -conj z2], [z2, conj z1]].
"""

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import sqrtm
from scipy.optimize import brentq

from .elliptic import DomainError
from .mehta_seshadri import ms_alpha
from .moduli import jacobian_lattice, lattice_coordinates, sym_target
from .monodromy import ConnectionPoint, connection_coefficients, monodromies

__all__ = [
    "CoveringData",
    "ImmersionMesh",
    "ClosingError",
    "RealityViolationError",
    "DegenerateMonodromyError",
    "covering_data",
    "closing_defect",
    "metric_from_monodromies",
    "sym_points",
    "unitarizer",
    "frames_at",
    "immersion_grid",
    "export_mesh",
    "stereographic",
]

SYM_TOL = 1e-8
CLOSING_TOL = 1e-5


class ClosingError(RuntimeError):
    """The connection at a Sym point has monodromy other than +-Id."""


class RealityViolationError(RuntimeError):
    """No positive definite metric makes the monodromies unitary."""


class DegenerateMonodromyError(RuntimeError):
    """The monodromy pair is reducible; the metric is not determined."""


@dataclass(frozen=True)
class CoveringData:
    p: int
    q: int
    genus: int
    branch_order: int
    umbilic_order: int


def _as_fraction(rho):
    if isinstance(rho, Fraction):
        return rho
    if isinstance(rho, (int, np.integer)):
        return Fraction(int(rho))
    if isinstance(rho, str):
        try:
            return Fraction(rho.strip())
        except (ValueError, ZeroDivisionError) as err:
            raise DomainError(f"cannot read {rho!r} as a fraction") from err
    x = float(rho)
    if not math.isfinite(x):
        raise DomainError("rho must be finite")
    frac = Fraction(x).limit_denominator(10 ** 4)
    if abs(float(frac) - x) > 1e-12:
        raise DomainError(f"rho = {x!r} is not a rational with small denominator")
    return frac


def covering_data(rho):
    """Covering arithmetic for the weight (2 rho + 1)/4 = p/q.

    ``rho`` may be a Fraction, an int, a string "p/q" or a float that is
    a small-denominator rational.  rho = 0 is accepted and gives the torus.
    """
    r = _as_fraction(rho)
    if not 0 <= r < Fraction(1, 2):
        raise DomainError(f"rho must lie in [0, 1/2), got {r}")
    w = (2 * r + 1) / 4
    p, q = w.numerator, w.denominator
    if q % 2:
        return CoveringData(p, q, q - 1, q - 2 * p - 1, 2 * p - 1)
    return CoveringData(p, q, q // 2 - 1, q // 2 - p - 1, p - 1)


def _lam(state, xi):
    if state.kind == "genus0":
        return xi * xi
    from .flow import genus1
    return genus1._curve(state.tau_spec).lam(xi)


def _eta(state, xi):
    if state.kind == "genus0":
        return complex(xi)
    from .flow import genus1
    cv = genus1._curve(state.tau_spec)
    return complex(np.sqrt(cv.r) * cv.y(xi) / (cv.lam(xi) - cv.r))


def _chi(state, xi):
    from .flow import chi_eval
    return complex(chi_eval(state, xi))


def _sym_defect(state, xi):
    d = _chi(state, xi) - sym_target(state.tau)
    a, b = lattice_coordinates(d, state.tau)
    g1, g2 = jacobian_lattice(state.tau)
    return abs(d - (np.round(a) * g1 + np.round(b) * g2))


def _sym_preimages(state):
    xi1 = complex(state.sym_xi)
    if state.kind == "genus0":
        xi2 = xi1.conjugate()
    else:
        # reflection s -> -s of C+ composed with the period 1
        xi2 = 1 - xi1.conjugate()
    for xi in (xi1, xi2):
        if _sym_defect(state, xi) > SYM_TOL:
            raise ClosingError(f"chi({xi!r}) misses the Sym coset by {_sym_defect(state, xi):.2e}")
    return xi1, xi2


def sym_points(state):
    """Sym points lambda_1, lambda_2 on S^1 and the mean curvature.

    ``H = i (lambda_1 + lambda_2) / (lambda_1 - lambda_2)``.
    """
    xi1, xi2 = _sym_preimages(state)
    l1, l2 = complex(_lam(state, xi1)), complex(_lam(state, xi2))
    if abs(l1 - l2) < 1e-12:
        raise ClosingError("the two Sym points coincide")
    H = 1j * (l1 + l2) / (l1 - l2)
    if abs(H.imag) > 1e-8 * max(1.0, abs(H)):
        raise ClosingError(f"mean curvature is not real: {H!r}")
    return l1, l2, float(H.real)


def _xi_for_lambda(state, lam):
    lam = complex(lam)
    if abs(abs(lam) - 1) > 1e-10:
        raise DomainError("lambda_probe must lie on the unit circle")
    if state.kind == "genus0":
        return complex(np.sqrt(lam))
    ts = state.tau_spec

    def phase(s):
        return float(np.angle(_lam(state, s + ts / 4) / lam))

    grid = np.linspace(0, 1, 257)
    vals = np.array([phase(s) for s in grid])
    for i in range(len(grid) - 1):
        if np.sign(vals[i]) != np.sign(vals[i + 1]) and abs(vals[i] - vals[i + 1]) < np.pi:
            return complex(brentq(phase, grid[i], grid[i + 1], xtol=1e-15) + ts / 4)
        if vals[i] == 0:
            return complex(grid[i] + ts / 4)
    raise DomainError(f"no preimage of lambda = {lam!r} on C+")


def _connection_at(state, xi):
    chi = _chi(state, xi)
    if state.rho == 0:
        alpha = chi.conjugate()
    else:
        alpha = ms_alpha(state.rho, chi, state.tau).alpha
    return ConnectionPoint(float(state.rho), chi, alpha, complex(state.tau))


def _P(eta):
    return np.array([[1, 1], [eta, -eta]], dtype=complex)


def _conj_P(eta, M):
    P = _P(eta)
    return P @ M @ np.linalg.inv(P)


def _hermitian_basis():
    return [np.array([[1, 0], [0, 0]], dtype=complex),
            np.array([[0, 0], [0, 1]], dtype=complex),
            np.array([[0, 1], [1, 0]], dtype=complex),
            np.array([[0, -1j], [1j, 0]], dtype=complex)]


def metric_from_monodromies(M1, M2, tol=1e-8):
    """Hermitian positive h with M^* h M = h for M1, M2, det h = 1."""
    basis = _hermitian_basis()
    rows = []
    for M in (M1, M2):
        cols = [(M.conj().T @ E @ M - E).ravel() for E in basis]
        A = np.array(cols).T
        rows.append(np.concatenate([A.real, A.imag]))
    A = np.concatenate(rows)
    _, s, Vt = np.linalg.svd(A)
    scale = max(1.0, s[0])
    if s[-2] < tol * scale:
        raise DegenerateMonodromyError("monodromy pair is reducible; metric not unique")
    v = Vt[-1]
    h = sum(c * E for c, E in zip(v, basis))
    h = (h + h.conj().T) / 2
    if np.trace(h).real < 0:
        h = -h
    ev = np.linalg.eigvalsh(h)
    if ev[0] <= 0 or s[-1] > 1e-6 * scale:
        raise RealityViolationError(f"no positive unitarizing metric (eigenvalues {ev}, "
                                    f"residual {s[-1]:.2e})")
    return h / np.sqrt(np.linalg.det(h).real)


def unitarizer(state, lambda_probe):
    """Hermitian metric unitarizing the monodromies at lambda_probe.

    Solved as the null vector of the linear map h -> (M^* h M - h) over the
    four-dimensional real space of hermitian matrices, followed by a
    positivity check; det h = 1.
    """
    l1, l2, _ = sym_points(state)
    lam = complex(lambda_probe)
    if min(abs(lam - l1), abs(lam - l2)) < 1e-6:
        raise DomainError("lambda_probe coincides with a Sym point")
    xi = _xi_for_lambda(state, lam)
    P = _connection_at(state, xi)
    mono = monodromies(P, method="ode")
    eta = _eta(state, xi)
    return metric_from_monodromies(_conj_P(eta, mono.M1), _conj_P(eta, mono.M2))


def _transport_dense(P, w_start, d, ts, F0):
    """Frames F(w_start + t d) F0 for t in ts (ts sorted away from 0)."""
    tau = complex(P.tau)
    diag = P.alpha * d - P.chi * np.conj(d)

    def rhs(t, y):
        b, c = connection_coefficients(P.rho, P.chi, tau, w_start + t * d)
        B = np.array([[diag, b * d], [c * d, -diag]], dtype=complex)
        return -(B @ y.reshape(2, 2)).ravel()

    ts = np.asarray(ts, dtype=float)
    out = np.empty((len(ts), 2, 2), dtype=complex)
    for sel in (ts >= 0, ts < 0):
        if not np.any(sel):
            continue
        tt = ts[sel]
        end = tt.max() if tt[0] >= 0 else tt.min()
        order = np.argsort(np.abs(tt))
        sol = solve_ivp(rhs, (0.0, end), F0.ravel(), method="DOP853", t_eval=tt[order],
                        rtol=1e-12, atol=1e-14)
        if not sol.success:
            raise RuntimeError(f"transport failed: {sol.message}")
        vals = sol.y.T.reshape(-1, 2, 2)
        tmp = np.empty_like(vals)
        tmp[order] = vals
        out[sel] = tmp
    return out


def _grid_frames(P, w0, us, vs, tau):
    """Frames at 2 u + 2 tau v for the grid, staircase paths from w0."""
    tau = complex(tau)
    I = np.eye(2, dtype=complex)
    # horizontal leg along Im w = Im w0
    xs = 2 * np.asarray(us) - w0.real
    Fh = _transport_dense(P, w0, 1.0, xs, I)
    out = np.empty((len(us), len(vs), 2, 2), dtype=complex)
    v0 = (w0.imag / tau.imag) / 2
    for j, u in enumerate(us):
        start = 2 * u + 1j * w0.imag
        out[j] = _transport_dense(P, start, 2 * tau, np.asarray(vs) - v0, Fh[j])
    return out


def frames_at(state, w, order="hv", base=None):
    """Frames Phi_1(w), Phi_2(w) at the Sym points along one staircase.

    ``order="hv"`` goes horizontally first, ``"vh"`` vertically first;
    the two agree when no puncture lies between the paths.
    """
    xis = _sym_preimages(state)
    tau = complex(state.tau)
    w0 = (1 + tau) / 2 if base is None else complex(base)
    w = complex(w)
    corner = complex(w.real, w0.imag) if order == "hv" else complex(w0.real, w.imag)
    out = []
    for xi in xis:
        P = _connection_at(state, xi)
        F = np.eye(2, dtype=complex)
        for a, b in ((w0, corner), (corner, w)):
            if abs(b - a) > 0:
                F = _transport_dense(P, a, b - a, [1.0], F)[0]
        eta = _eta(state, xi)
        out.append(_conj_P(eta, F))
    return tuple(out)


def _nearest_su2(f):
    """Polar projection onto U(2), then det normalized to 1."""
    U, _, Vh = np.linalg.svd(f)
    Q = U @ Vh
    d = np.linalg.det(Q)
    return Q / np.sqrt(d)[..., None, None]


@dataclass
class ImmersionMesh:
    """Vertices (z1, z2) in S^3 on an n_u x n_v grid of the cut torus."""

    z: np.ndarray  # (n_u, n_v, 2) complex
    u: np.ndarray
    v: np.ndarray
    tau: complex
    base_point: complex
    sym_lambdas: tuple
    H: float
    metric: np.ndarray
    projection_shift: float
    cut_curves: dict = field(default_factory=dict)

    @property
    def resolution(self):
        return self.z.shape[0], self.z.shape[1]

    def points(self):
        """Vertices as real 4-vectors (x1, y1, x2, y2), shape (n_u, n_v, 4)."""
        z = self.z
        return np.stack([z[..., 0].real, z[..., 0].imag, z[..., 1].real, z[..., 1].imag], axis=-1)


def closing_defect(state):
    """Largest deviation from +-Id of the generator monodromies at the Sym points."""
    xis = _sym_preimages(state)
    conns = [_connection_at(state, xi) for xi in xis]
    err = 0.0
    for P in conns:
        mono = monodromies(P, method="ode")
        for M in (mono.M1, mono.M2):
            sgn = np.sign(np.trace(M).real) or 1.0
            err = max(err, float(np.max(np.abs(M - sgn * np.eye(2)))))
    return err, xis, conns


def _sym_connections(state):
    err, xis, conns = closing_defect(state)
    if err > CLOSING_TOL:
        raise ClosingError(f"monodromy at the Sym points is not +-Id (defect {err:.2e})")
    return xis, conns


def immersion_grid(state, n_u, n_v, lambda_probe=None):
    """Sample the immersion on the grid w = 2 u + 2 tau v.

    u_j = (j + 1/2)/n_u and v_k = (k + 1/2)/n_v, so the grid keeps off the
    cut curves l1 = {t tau}, l2 = {t tau + 1} and the punctures.

    Parameters
    ----------
    state : FlowState
        Accepted state.
    n_u, n_v : int
    lambda_probe : complex, optional
        Point of S^1 where the unitarizing metric is computed (rho > 0);
        default exp(i pi / 3) rotated away from the Sym points.

    Raises
    ------
    ClosingError
        If the Sym point monodromies are not +-Id to 1e-5.
    """
    n_u, n_v = int(n_u), int(n_v)
    if n_u < 2 or n_v < 2:
        raise DomainError("grid needs at least 2 x 2 points")
    tau = complex(state.tau)
    l1, l2, H = sym_points(state)
    xis, conns = _sym_connections(state)
    if state.rho == 0:
        # abelian monodromy; the conjugated connection is already unitary
        h = np.eye(2, dtype=complex)
    else:
        probe = lambda_probe
        if probe is None:
            probe = np.exp(1j * np.pi / 3)
            while min(abs(probe - l1), abs(probe - l2)) < 0.1:
                probe *= np.exp(0.3j)
        h = unitarizer(state, probe)
    hs = sqrtm(h)
    hsi = np.linalg.inv(hs)
    us = (np.arange(n_u) + 0.5) / n_u
    vs = (np.arange(n_v) + 0.5) / n_v
    w0 = (1 + tau) / 2
    frames = []
    for xi, P in zip(xis, conns):
        F = _grid_frames(P, w0, us, vs, tau)
        Pm = _P(_eta(state, xi))
        frames.append(Pm @ F @ np.linalg.inv(Pm))
    f = hs @ np.linalg.inv(frames[0]) @ frames[1] @ hsi
    U = _nearest_su2(f)
    shift = float(np.max(np.abs(U - f)))
    z = np.stack([U[..., 0, 0], U[..., 1, 0]], axis=-1)
    cut = {"l1": "t tau, t in [0, 2)", "l2": "t tau + 1, t in [0, 2)",
           "punctures": [0, 1, complex(tau), complex(1 + tau)]}
    return ImmersionMesh(z=z, u=us, v=vs, tau=tau, base_point=w0, sym_lambdas=(l1, l2), H=H,
                         metric=h, projection_shift=shift, cut_curves=cut)


# Fixed rotation used when a vertex comes close to the projection pole.
_ROTATION = np.array([[np.cos(0.4), -np.sin(0.4)], [np.sin(0.4), np.cos(0.4)]], dtype=complex)


def stereographic(z):
    """Projection from (0, 0, 0, -1): (x1, y1, x2) / (1 + y2)."""
    z = np.asarray(z)
    den = 1 + z[..., 1].imag
    return np.stack([z[..., 0].real, z[..., 0].imag, z[..., 1].real], axis=-1) / den[..., None]


def export_mesh(mesh, path, format="obj"):
    """Write the mesh as OBJ (stereographic vertices, quads) or CSV.

    If some vertex lies within 1e-3 of the pole, every vertex is first
    multiplied by a fixed SU(2) rotation; the output stays deterministic.
    """
    n_u, n_v = mesh.resolution
    if format == "csv":
        with open(path, "w") as fh:
            fh.write("u,v,x1,y1,x2,y2\n")
            pts = mesh.points()
            for j in range(n_u):
                for k in range(n_v):
                    x = pts[j, k]
                    fh.write(f"{mesh.u[j]:.8f},{mesh.v[k]:.8f},{x[0]:.8f},{x[1]:.8f},"
                             f"{x[2]:.8f},{x[3]:.8f}\n")
        return
    if format != "obj":
        raise DomainError(f"unknown mesh format {format!r}")
    z = mesh.z
    if np.min(1 + z[..., 1].imag) < 1e-3:
        z = np.einsum("ij,...j->...i", _ROTATION, z)
    X = stereographic(z)
    with open(path, "w") as fh:
        fh.write(f"# {n_u} x {n_v} grid, stereographic projection from (0,0,0,-1)\n")
        for j in range(n_u):
            for k in range(n_v):
                x = X[j, k]
                fh.write(f"v {x[0]:.10f} {x[1]:.10f} {x[2]:.10f}\n")
        for j in range(n_u - 1):
            for k in range(n_v - 1):
                a = j * n_v + k + 1
                fh.write(f"f {a} {a + n_v} {a + n_v + 1} {a + 1}\n")
