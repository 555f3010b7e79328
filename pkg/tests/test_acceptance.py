"""One test per acceptance criterion, at the stated tolerances and time budgets."""

import csv
import io
import time
from fractions import Fraction
from math import gcd

import numpy as np

from oracles import clifford_frame, covering_brute
from whitham.cli import main
from whitham.elliptic import beta, eta_constants, half_period_values, theta, wp, wp_prime
from whitham.flow import (chi_eval, delaunay_base, delaunay_seed, flow_residual, flow_step,
                          flow_to, homogeneous_seed)
from whitham.mehta_seshadri import (ms_alpha, ms_alpha_batch, ms_alpha_circle,
                                    ms_residue_probe)
from whitham.monodromy import ConnectionPoint, connection_form
from whitham.moduli import jacobian_lattice
from whitham.reconstruct import closing_defect, covering_data, immersion_grid, sym_points


def test_criterion_01_special_functions():
    t0 = time.perf_counter()
    for ts in (0.5j, 1j, 2j):
        e1, e3 = eta_constants(ts)
        assert abs(e1 * ts / 2 - e3 / 2 - np.pi * 1j / 2) < 1e-10

    rng = np.random.default_rng(1)
    tau = 0.2 + 1.1j
    # points in the fundamental parallelogram, where |theta| is of order one
    w = rng.uniform(0, 1, 100) + tau * rng.uniform(0, 1, 100)
    th = theta(w, tau)
    r1 = np.abs(theta(w + 1, tau) - th)
    shifted = theta(w + tau, tau)
    r2 = np.abs(shifted + th * np.exp(-2j * np.pi * w)) / np.maximum(1, np.abs(shifted))
    assert max(r1.max(), r2.max()) < 1e-12

    L = 1.3j
    e = half_period_values(L)
    z = rng.uniform(0.1, 0.4, 20) + 1j * rng.uniform(0.1, 0.5, 20)
    p = wp(z, L)
    res = np.abs(wp_prime(z, L) ** 2 - 4 * (p - e[0]) * (p - e[1]) * (p - e[2]))
    assert np.max(res / np.abs(wp_prime(z, L)) ** 2) < 1e-9
    assert time.perf_counter() - t0 < 5


def test_criterion_02_abelianization():
    t0 = time.perf_counter()
    x, tau = 0.3 + 0.1j, 1j
    assert abs(beta(x, x, tau)) < 1e-12
    w = 0.41 + 0.27j
    b = beta(x, w, tau)
    assert abs(beta(x, w + 1, tau) - b) < 1e-12 and abs(beta(x, w + tau, tau) - b) < 1e-12
    h = 1e-5
    dx = (beta(x, w + h, tau) - beta(x, w - h, tau)) / (2 * h)
    dy = (beta(x, w + 1j * h, tau) - beta(x, w - 1j * h, tau)) / (2 * h)
    assert abs(0.5 * (dx + 1j * dy) - 2j * np.pi * x / (tau - np.conj(tau)) * b) < 1e-6

    P = ConnectionPoint(0.2, 0.3 + 0.1j, 0.25 - 0.2j, 1.2j)
    for wp_ in (0.37 + 0.41j, 1.3 + 0.2j):
        A, B = connection_form(P, wp_)
        assert abs(np.trace(A)) < 1e-15 and abs(np.trace(B)) < 1e-15
        for scale in (2.0, 1e-3, 7.5 - 1j):
            A2, B2 = connection_form(P, wp_, scale=scale)
            assert np.max(np.abs(A2 - A)) < 1e-12 and np.max(np.abs(B2 - B)) < 1e-12
    assert time.perf_counter() - t0 < 10


def test_criterion_03_mehta_seshadri():
    t0 = time.perf_counter()
    chi = 0.4 * np.exp(2j * np.pi * np.arange(64) / 64) + 0.05
    assert np.max(np.abs(ms_alpha_circle(0.0, chi, 1j) - np.conj(chi))) < 1e-8

    rho, c, tau = 0.1, 0.3 + 0.1j, 1.3j
    base = ms_alpha(rho, c, tau).alpha
    g1, g2 = jacobian_lattice(tau)
    d = tau - np.conj(tau)
    for L, shift in ((2 * g1, 2j * np.pi / d), (2 * g2, 2j * np.pi * np.conj(tau) / d)):
        a = ms_alpha_batch(rho, [c + L], tau, [base + shift + 1e-3], reduce=False)[0]
        assert abs(a - base - shift) < 1e-7

    assert abs(ms_alpha(rho, -c, tau).alpha + base) < 1e-8
    assert abs(ms_alpha(rho, np.conj(c), tau).alpha - np.conj(base)) < 1e-8

    rho, tau = 0.05, 1j
    res = ms_residue_probe(rho, tau, 0, 1e-2)
    target = 4 * np.pi * rho / abs(tau - np.conj(tau))
    assert abs(abs(res) - target) < 0.05 * target, \
        f"residue {abs(res):.6g} against {target:.6g} (ratio {abs(res) / target:.4f})"
    assert time.perf_counter() - t0 < 120


def test_criterion_04_homogeneous_seed():
    s = homogeneous_seed(1j)
    assert s.R == np.sqrt(2)
    assert np.linalg.norm(flow_residual(s)) < 1e-8
    assert s.diagnostics["newton_iterations"] == 0


def test_criterion_05_clifford_flow():
    t0 = time.perf_counter()
    # K = 16 and N = 128 throughout, so the automatic truncation doubling is off
    traj = flow_to(homogeneous_seed(1j), 0.05, drho=0.01, auto_refine=False)
    seconds = time.perf_counter() - t0
    assert len(traj) - 1 <= 10
    assert abs(traj[-1].rho - 0.05) < 1e-12
    xi = np.exp(2j * np.pi * np.arange(64) / 64)
    targets = np.exp(1j * np.pi / 4) * np.array([1, 1j, -1, -1j])
    for s in traj:
        assert len(s.coeffs) == 16 and s.diagnostics["N"] == 128
        assert np.max(np.abs(chi_eval(s, 1j * xi) - 1j * chi_eval(s, xi))) < 1e-7
        assert np.min(np.abs(targets - s.sym_xi)) < 1e-6
        assert abs(sym_points(s)[2]) < 1e-8
    assert seconds < 15 * 60


def test_criterion_06_rational_weights():
    t0 = time.perf_counter()
    n = 0
    for q in range(2, 41):
        for p in range(1, q):
            if gcd(p, q) == 1 and Fraction(1, 4) < Fraction(p, q) < Fraction(1, 2):
                rho = (Fraction(4 * p, q) - 1) / 2
                c = covering_data(rho)
                assert (c.p, c.q, c.genus, c.branch_order, c.umbilic_order) == covering_brute(rho)
                n += 1
    c = covering_data(Fraction(1, 6))
    assert (c.genus, c.branch_order, c.umbilic_order) == (2, 0, 1)
    assert n > 100
    assert time.perf_counter() - t0 < 1


def test_criterion_07_delaunay_seed():
    t0 = time.perf_counter()
    b = delaunay_base(1j)
    p1, p2 = b.periods
    assert abs(p1 - 2) < 1e-8 and abs(p2) < 1e-8
    assert abs(b.a + 1 / np.pi) < 1e-15
    assert b.a < 0 < b.b and 0 < b.s0 < 0.5
    area = 8j * b.tau_from_spec * b.a * b.b
    assert area.real > 0 and abs(area.imag) < 1e-12 and abs(area.real - b.area) < 1e-12
    s = delaunay_seed(1j, sign=1)
    assert np.linalg.norm(flow_residual(s)) < 1e-8
    assert time.perf_counter() - t0 < 30


def test_criterion_08_two_delaunay_branches(delaunay_plus_step):
    t0 = time.perf_counter()
    plus = delaunay_plus_step.value
    assert plus.residual_norm < 1e-8
    minus = flow_step(delaunay_seed(1j, sign=-1), 0.005)
    assert minus.residual_norm < 1e-8
    r_plus = plus.diagnostics["interior_residue"]
    r_minus = minus.diagnostics["interior_residue"]
    assert np.sign(r_plus) == -np.sign(r_minus) != 0
    assert delaunay_plus_step.seconds + time.perf_counter() - t0 < 30 * 60


def test_criterion_09_reconstruction_oracle():
    t0 = time.perf_counter()
    s = homogeneous_seed(1j)
    mesh = immersion_grid(s, 64, 64)
    l1, l2 = mesh.sym_lambdas
    c1, w0 = s.coeffs[0], mesh.base_point
    err = 0.0
    for j, u in enumerate(mesh.u):
        for k, v in enumerate(mesh.v):
            w = 2 * u + 2 * s.tau * v
            f = np.linalg.inv(clifford_frame(c1, l1, w, w0)) @ clifford_frame(c1, l2, w, w0)
            err = max(err, np.max(np.abs(f[:, 0] - mesh.z[j, k])))
    assert err < 1e-5
    assert closing_defect(s)[0] < 1e-5
    assert np.max(np.abs(np.linalg.norm(mesh.points(), axis=-1) - 1)) < 1e-6
    assert time.perf_counter() - t0 < 5 * 60


def _trace(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))[1:]
    return np.array([[float(x) for x in r] for r in rows])


def test_criterion_10_determinism(tmp_path):
    out = io.StringIO()
    assert main(["seed", "homogeneous", "--tau", "1.1", "--out", str(tmp_path)], out=out) == 0
    assert main(["flow", "--resume", str(tmp_path / "seed.json"), "--rho", "0.04",
                 "--out", str(tmp_path / "full")], out=out) == 0
    full = _trace(tmp_path / "full" / "trace.csv")
    for k in (1, 2):
        assert main(["flow", "--resume", str(tmp_path / "full" / f"step_{k:04d}.json"),
                     "--rho", "0.04", "--out", str(tmp_path / f"r{k}")], out=out) == 0
        replay = _trace(tmp_path / f"r{k}" / "trace.csv")
        assert replay.shape == full[k:].shape
        same_nan = np.isnan(replay) == np.isnan(full[k:])
        assert same_nan.all()
        assert np.nanmax(np.abs(replay - full[k:])) < 1e-10
