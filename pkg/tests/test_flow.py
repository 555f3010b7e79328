import json

import numpy as np
import pytest

from oracles import delaunay_periods
from whitham.elliptic import DomainError
from whitham.flow import (SCHEMA_VERSION, ChiSeries, FlowError, TurningPointError, alpha_modes,
                          chi_eval, delaunay_base, delaunay_seed, flow_residual, flow_step,
                          flow_to, homogeneous_seed, load_checkpoint, save_checkpoint,
                          state_from_dict, state_to_dict)
from whitham.flow import genus0, genus1
from whitham.moduli import jacobian_lattice, reduce_mod_lattice, sym_target

# Frozen from tests/oracles.py: periods of (a wp(z - tau_s/2) + b) dz at tau_s = i computed
# with thetas from mpmath and b from a lattice-sum eta3 (about 1e-10 off).
DELAUNAY_PERIODS_I = (2.0000000000873266, 8.732633718956014e-11j)
B_ORACLE_I = 1.0000000000873264


def _sym_ok(state, tol=1e-8):
    d = chi_eval(state, state.sym_xi) - sym_target(state.tau)
    rep, hit = reduce_mod_lattice(d, state.tau, tol=tol)
    return hit


class TestHomogeneousSeed:
    def test_square_torus_R(self):
        assert homogeneous_seed(1j).R == np.sqrt(2)

    @pytest.mark.parametrize("t", [1.0, 1.2, 1.7])
    def test_R_formula(self, t):
        s = homogeneous_seed(1j * t)
        assert abs(s.R - np.sqrt(1 + t * t)) < 1e-15
        assert abs(s.coeffs[0] - s.R * np.pi / (4 * t)) < 1e-15

    @pytest.mark.parametrize("t", [np.sqrt(3), 2.0, 0.9])
    def test_window(self, t):
        with pytest.raises(DomainError):
            homogeneous_seed(1j * t)

    def test_sym_preimage(self):
        s = homogeneous_seed(1j)
        assert abs(s.sym_xi - np.exp(1j * np.pi / 4)) < 1e-15
        for xi in (s.sym_xi, -s.sym_xi, np.conj(s.sym_xi), -np.conj(s.sym_xi)):
            assert _sym_ok(s.with_(sym_xi=xi))

    def test_fixed_point_without_newton(self):
        s = homogeneous_seed(1.3j)
        assert s.diagnostics["newton_iterations"] == 0
        assert np.linalg.norm(flow_residual(s)) < 1e-8


class TestDelaunayBase:
    base = delaunay_base(1j)

    def test_a(self):
        assert abs(self.base.a + 1 / np.pi) < 1e-15

    def test_b_against_lattice_sum(self):
        assert abs(self.base.b - B_ORACLE_I) < 5e-9

    def test_periods(self):
        p1, p2 = self.base.periods
        assert abs(p1 - 2) < 1e-8 and abs(p2) < 1e-8
        assert abs(p1 - DELAUNAY_PERIODS_I[0]) < 5e-9 and abs(p2 - DELAUNAY_PERIODS_I[1]) < 5e-9

    def test_signs_and_area(self):
        b = self.base
        assert b.a < 0 < b.b
        assert 0 < b.s0 < 0.5
        assert b.area > 0
        assert abs(b.area - abs(8j * b.tau_from_spec * b.a * b.b)) < 1e-12
        assert abs(b.tau_from_spec - 2j * b.h) < 1e-15

    @pytest.mark.parametrize("t", [0.8, 1.5])
    def test_other_moduli(self, t):
        b = delaunay_base(1j * t)
        assert abs(b.a - (-t / np.pi)) < 1e-14
        assert b.a < 0 < b.b and 0 < b.s0 < 0.5


@pytest.mark.slow
def test_delaunay_period_oracle_live():
    p1, p2, a, b = delaunay_periods(1.3j)
    base = delaunay_base(1.3j)
    assert abs(a - base.a) < 1e-14
    assert abs(b - base.b) < 5e-9
    assert abs(p1 - base.periods[0]) < 5e-9 and abs(p2 - base.periods[1]) < 5e-9


class TestChiEval:
    def test_linear_case(self):
        s = homogeneous_seed(1j)
        xi = 0.3 + 0.8j
        assert chi_eval(s, xi) == s.coeffs[0] * xi

    def test_odd(self):
        s = homogeneous_seed(1j).with_(chi=ChiSeries("genus0", [0.5, 0.1, -0.02]))
        xi = np.exp(1j * np.linspace(0, 6, 7))
        assert np.max(np.abs(chi_eval(s, -xi) + chi_eval(s, xi))) < 1e-15

    def test_odd_genus1(self, delaunay_seed_plus):
        s = delaunay_seed_plus.with_(chi=ChiSeries("genus1", [0.01, 0.02, -0.01]))
        xi = 0.3 + 0.2j
        assert abs(chi_eval(s, -xi) + chi_eval(s, xi)) < 1e-12

    def test_genus1_half_period_on_lattice(self, delaunay_seed_plus):
        s = delaunay_seed_plus
        assert reduce_mod_lattice(chi_eval(s, 0.5), s.tau)[1]
        assert reduce_mod_lattice(chi_eval(s, 0.0), s.tau)[1]

    def test_genus1_periods(self, delaunay_seed_plus):
        # going once around C+ adds 2 in the normalized coordinate, a lattice vector
        s = delaunay_seed_plus
        xi = s.sym_xi
        d = genus1.chi_normalized(s, xi + 1) - genus1.chi_normalized(s, xi)
        assert abs(d - 2) < 1e-8


class TestAlphaModes:
    def test_rho_zero_single_mode(self):
        s = homogeneous_seed(1j)
        k, a = alpha_modes(s, 64)
        ref = np.where(k == -1, s.coeffs[0], 0)
        assert np.max(np.abs(a - ref)) < 1e-10

    def test_power_of_two(self):
        with pytest.raises(DomainError):
            alpha_modes(homogeneous_seed(1j), 48)

    def test_parity_and_reality(self, clifford_trajectory):
        s = clifford_trajectory.value[-1]
        k, a = alpha_modes(s)
        assert np.max(np.abs(a[k % 2 == 0])) < 1e-10
        assert np.max(np.abs(a.imag)) < 1e-10


class TestFlowResidual:
    def test_homogeneous_seed(self):
        assert np.linalg.norm(flow_residual(homogeneous_seed(1j))) < 1e-8

    def test_linear_response(self):
        s = homogeneous_seed(1j)
        c = s.coeffs.copy()
        c[1] = 1e-3
        p = s.with_(chi=ChiSeries("genus0", c), cache=None)
        k, a = alpha_modes(p)
        assert abs(a[k == -3][0] - 1e-3) < 1e-10
        F = flow_residual(p)
        sym = genus0.sym_residual(c, s.sym_xi, s.tau)
        assert abs(np.linalg.norm(F) - np.hypot(1e-3, abs(sym))) < 1e-10

    def test_delaunay_seed(self, delaunay_seed_plus):
        assert np.linalg.norm(flow_residual(delaunay_seed_plus)) < 1e-8
        assert delaunay_seed_plus.R == 0


class TestGenus0Flow:
    def test_step_keeps_i_symmetry(self, clifford_trajectory):
        s = clifford_trajectory.value[1]
        assert abs(s.rho - 0.01) < 1e-15
        xi = np.exp(2j * np.pi * np.arange(32) / 32)
        assert np.max(np.abs(chi_eval(s, 1j * xi) - 1j * chi_eval(s, xi))) < 1e-8

    def test_reversibility(self, clifford_trajectory):
        s = clifford_trajectory.value[1]
        back = flow_step(s, -0.01)
        seed = clifford_trajectory.value[0]
        assert abs(back.rho) < 1e-15
        assert abs(back.R - seed.R) < 1e-6
        assert np.max(np.abs(back.coeffs[: len(seed.coeffs)] - seed.coeffs)) < 1e-6

    def test_accepted_states(self, clifford_trajectory):
        for s in clifford_trajectory.value:
            assert s.residual_norm < 1e-8
            assert _sym_ok(s)
            assert s.coeffs.dtype == float

    def test_four_sym_preimages(self, clifford_trajectory):
        s = clifford_trajectory.value[-1]
        pts = [s.sym_xi, -s.sym_xi, np.conj(s.sym_xi), -np.conj(s.sym_xi)]
        assert min(abs(a - b) for i, a in enumerate(pts) for b in pts[i + 1:]) > 0.1
        for xi in pts:
            assert _sym_ok(s.with_(sym_xi=xi))

    def test_R_continuity(self, clifford_trajectory):
        traj = clifford_trajectory.value
        R = np.array([s.R for s in traj])
        rho = np.array([s.rho for s in traj])
        slopes = np.abs(np.diff(R) / np.diff(rho))
        assert np.all(np.diff(rho) > 0)
        assert np.all(np.abs(np.diff(R)) < 10 * np.abs(np.diff(rho)) * slopes.max())
        assert np.all(np.diff(slopes) < slopes.max())

    def test_drho_cap(self):
        with pytest.raises(DomainError):
            flow_step(homogeneous_seed(1j), 0.05)


class TestFlowTo:
    def test_noop(self):
        s = homogeneous_seed(1j)
        traj = flow_to(s, 0.0)
        assert traj == [s]

    def test_target_range(self):
        with pytest.raises(DomainError):
            flow_to(homogeneous_seed(1j), 0.5)

    def test_lands_on_target(self, clifford_trajectory):
        traj = clifford_trajectory.value
        assert abs(traj[-1].rho - 0.05) < 1e-12
        assert len(traj) == 6

    def test_step_budget_keeps_trajectory(self):
        with pytest.raises(FlowError) as info:
            flow_to(homogeneous_seed(1j), 0.01, steps_max=0)
        assert len(info.value.trajectory) == 1

    @pytest.mark.slow
    def test_lawson_genus2_weight(self):
        traj = flow_to(homogeneous_seed(1j), 1 / 6, drho=0.02)
        end = traj[-1]
        assert abs(end.rho - 1 / 6) < 1e-12
        assert min(abs(end.sym_xi - z) for z in
                   np.exp(1j * np.pi / 4) * np.array([1, 1j, -1, -1j])) < 1e-6


class TestGenus1Flow:
    def test_plus_branch_converges(self, delaunay_plus_step):
        s = delaunay_plus_step.value
        assert abs(s.rho - 0.005) < 1e-15
        assert s.residual_norm < 1e-8
        assert _sym_ok(s)
        assert s.diagnostics["interior_residue"] > 0
        assert s.tau_spec.imag > 1.0

    def test_predictor_follows_residue_ode(self, delaunay_plus_step):
        # R x1 = kappa rho on the stable branch
        s = delaunay_plus_step.value
        kappa = 2 * s.tau.imag / np.pi
        assert abs(s.R * genus1.x1_coefficient(s) - kappa * s.rho) < 1e-8

    @pytest.mark.slow
    def test_minus_branch_turns_back(self):
        s = delaunay_seed(1j, sign=-1)
        with pytest.raises(TurningPointError) as info:
            flow_step(s, 0.005)
        assert 5e-4 < info.value.diagnostics["turning_point"] < 2e-3

    def test_sign_validation(self):
        with pytest.raises(DomainError):
            delaunay_seed(1j, sign=0)


class TestCheckpoint:
    def test_schema_fields(self, tmp_path):
        s = homogeneous_seed(1.2j)
        path = tmp_path / "c.json"
        save_checkpoint(s, path)
        d = json.loads(path.read_text())
        for k in ("kind", "rho", "tau_re", "tau_im", "tau_spec_im", "sign", "R", "coeffs",
                  "sym_xi_re", "sym_xi_im", "residual_norm", "schema_version"):
            assert k in d
        assert d["schema_version"] == SCHEMA_VERSION

    def test_bit_exact_round_trip(self, tmp_path, clifford_trajectory, delaunay_plus_step):
        for s in (clifford_trajectory.value[-1], delaunay_plus_step.value):
            path = tmp_path / "c.json"
            save_checkpoint(s, path)
            back = load_checkpoint(path)
            assert back == s.with_(diagnostics={})
            assert back.coeffs.tobytes() == s.coeffs.tobytes()
            assert state_to_dict(back) == state_to_dict(s)

    @pytest.mark.parametrize("mutate", [
        lambda d: d.pop("R"),
        lambda d: d.update(schema_version=99),
        lambda d: d.update(kind="genus7"),
        lambda d: d.update(sign="?"),
        lambda d: d.update(coeffs=[float("nan")]),
    ])
    def test_rejects_bad_input(self, mutate):
        d = state_to_dict(homogeneous_seed(1j))
        mutate(d)
        with pytest.raises(ValueError):
            state_from_dict(d)

    def test_corrupted_file(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text('{"kind": "genus0", ')
        with pytest.raises(ValueError):
            load_checkpoint(path)


def test_jacobian_generators_used_for_sym():
    g1, g2 = jacobian_lattice(1j)
    assert abs(sym_target(1j) - (g1 + g2) / 2) < 1e-15
