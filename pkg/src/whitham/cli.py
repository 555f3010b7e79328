"""Command line: seed | flow | reconstruct | validate.

Exit codes: 0 success, 2 bad input or domain error, 3 flow step failure
(partial trace kept), 4 closing error or unreadable checkpoint during
reconstruction, 5 validation failure.

Every flag may also be given in a ``--config`` file of ``key = value``
lines (keys are flag names without dashes, ``-`` or ``_`` both allowed);
flags on the command line win.
"""

import argparse
import csv
import math
import os
import sys
import time
from fractions import Fraction
from pathlib import Path

import numpy as np

from .elliptic import DomainError
from .flow import (FlowError, delaunay_base, delaunay_seed, flow_to, homogeneous_seed,
                   load_checkpoint, save_checkpoint)

TRACE_COLUMNS = ["rho", "R", "tau_im", "tau_spec_im", "residual_norm", "sym_xi_phase",
                 "interior_residue"]

EXIT_OK, EXIT_INPUT, EXIT_FLOW, EXIT_CLOSING, EXIT_VALIDATE = 0, 2, 3, 4, 5


class UsageError(Exception):
    """Bad command line or configuration."""


def parse_rho(text):
    """Decimal or ``p/q``; returns (float value, Fraction or None)."""
    s = str(text).strip()
    try:
        if "/" in s:
            frac = Fraction(s)
            return float(frac), frac
        return float(s), None
    except (ValueError, ZeroDivisionError) as err:
        raise UsageError(f"cannot read rho from {text!r}") from err


def parse_grid(text):
    try:
        a, b = str(text).lower().split("x")
        n_u, n_v = int(a), int(b)
    except ValueError as err:
        raise UsageError(f"grid must look like 64x64, got {text!r}") from err
    if n_u < 2 or n_v < 2:
        raise UsageError("grid needs at least 2x2 points")
    return n_u, n_v


def parse_sign(text):
    if text in (None, ""):
        return None
    if str(text) in ("+", "+1", "1"):
        return 1
    if str(text) in ("-", "-1"):
        return -1
    raise UsageError(f"sign must be + or -, got {text!r}")


def read_config(path):
    """Flat key = value file; '#' starts a comment."""
    out = {}
    with open(path) as fh:
        for n, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{n}: expected key = value")
            k, v = line.split("=", 1)
            out[k.strip().replace("-", "_")] = v.strip()
    return out


def _threads():
    v = os.environ.get("WHITHAM_THREADS")
    if v is None:
        return 1
    try:
        n = int(v)
    except ValueError as err:
        raise UsageError("WHITHAM_THREADS must be a positive integer") from err
    if n < 1:
        raise UsageError("WHITHAM_THREADS must be a positive integer")
    return n


def build_parser():
    p = argparse.ArgumentParser(prog="whitham", description=__doc__.splitlines()[0])
    p.add_argument("--config", help="key = value file with default flag values")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("seed", help="write a rho = 0 checkpoint")
    s.add_argument("family", choices=["homogeneous", "delaunay"])
    s.add_argument("--tau", help="Im(tau) of the homogeneous torus")
    s.add_argument("--tau-spec", help="Im(tau_spec) of the Delaunay spectral curve")
    s.add_argument("--sign", help="Delaunay branch, + or -")
    s.add_argument("--trunc", type=int, help="truncation K (genus 0) or M (genus 1)")
    s.add_argument("--samples", type=int, help="circle samples N")
    s.add_argument("--out", help="output directory")

    f = sub.add_parser("flow", help="continue a checkpoint in rho")
    f.add_argument("--resume", help="checkpoint to start from")
    f.add_argument("--rho", help="target rho, decimal or p/q")
    f.add_argument("--drho", help="nominal step (default 0.01)")
    f.add_argument("--sign", help="branch for genus-one checkpoints")
    f.add_argument("--steps-max", type=int, help="maximal number of accepted steps")
    f.add_argument("--out", help="output directory")

    r = sub.add_parser("reconstruct", help="sample the immersion and export a mesh")
    r.add_argument("--resume", help="checkpoint")
    r.add_argument("--grid", help="n_u x n_v, e.g. 64x64")
    r.add_argument("--format", choices=["obj", "csv"])
    r.add_argument("--out", help="output directory")

    sub.add_parser("validate", help="run the invariant checks")
    return p


_DEFAULTS = {"out": ".", "drho": "0.01", "grid": "64x64", "format": "obj"}


def _merge(args):
    """Fill unset flags from the config file and the defaults."""
    cfg = read_config(args.config) if args.config else {}
    for k, v in cfg.items():
        if hasattr(args, k) and getattr(args, k) is None:
            cur = v
            if k in ("trunc", "samples", "steps_max"):
                try:
                    cur = int(v)
                except ValueError as err:
                    raise UsageError(f"config key {k} needs an integer") from err
            setattr(args, k, cur)
    for k, v in _DEFAULTS.items():
        if hasattr(args, k) and getattr(args, k) is None:
            setattr(args, k, v)
    return args


def _positive_float(text, name):
    try:
        x = float(text)
    except (TypeError, ValueError) as err:
        raise UsageError(f"--{name} needs a number") from err
    if not math.isfinite(x):
        raise UsageError(f"--{name} must be finite")
    return x


def cmd_seed(args, out=sys.stdout):
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    if args.family == "homogeneous":
        if args.sign is not None:
            raise UsageError("--sign is only meaningful for Delaunay seeds")
        if args.tau is None:
            raise UsageError("seed homogeneous needs --tau")
        t = _positive_float(args.tau, "tau")
        kw = {}
        if args.trunc is not None:
            kw["K"] = args.trunc
        if args.samples is not None:
            kw["N"] = args.samples
        state = homogeneous_seed(1j * t, **kw)
        lines = [f"R = {state.R:.15g}"]
    else:
        if args.tau_spec is None:
            raise UsageError("seed delaunay needs --tau-spec")
        ts = 1j * _positive_float(args.tau_spec, "tau-spec")
        sign = parse_sign(args.sign if args.sign is not None else "+")
        base = delaunay_base(ts)
        kw = {}
        if args.trunc is not None:
            kw["M"] = args.trunc
        if args.samples is not None:
            kw["N"] = args.samples
        state = delaunay_seed(ts, sign, **kw)
        lines = [f"a = {base.a:.15g}", f"b = {base.b:.15g}", f"s0 = {base.s0:.15g}",
                 f"tau = {base.tau_from_spec.imag:.15g} i", f"area = {base.area:.15g}"]
    from .reconstruct import sym_points
    l1, l2, H = sym_points(state)
    lines += [f"sym_xi = {state.sym_xi:.15g}", f"sym lambdas = {l1:.12g}, {l2:.12g}",
              f"H = {H:.12g}", f"residual_norm = {state.residual_norm:.3e}"]
    path = outdir / "seed.json"
    save_checkpoint(state, path)
    print("\n".join(lines), file=out)
    print(f"wrote {path}", file=out)
    return EXIT_OK


def trace_row(state):
    ts = state.tau_spec
    ir = state.diagnostics.get("interior_residue", float("nan")) if state.kind == "genus1" \
        else float("nan")
    return [state.rho, state.R, complex(state.tau).imag,
            float("nan") if ts is None else complex(ts).imag, state.residual_norm,
            float(np.angle(state.sym_xi)), ir]


def _fmt(x):
    return repr(float(x))


def cmd_flow(args, out=sys.stdout):
    if args.resume is None:
        raise UsageError("flow needs --resume CHECKPOINT")
    if args.rho is None:
        raise UsageError("flow needs --rho")
    try:
        state = load_checkpoint(args.resume)
    except (OSError, ValueError) as err:
        raise UsageError(f"cannot read checkpoint: {err}") from err
    sign = parse_sign(args.sign)
    if sign is not None:
        if state.kind != "genus1":
            raise UsageError("--sign is only valid for genus-one checkpoints")
        state = state.with_(sign=sign)
    rho, _ = parse_rho(args.rho)
    if not abs(rho) < 0.5:
        raise UsageError("rho must satisfy |rho| < 1/2")
    drho = _positive_float(args.drho, "drho")
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    trace_path = outdir / "trace.csv"
    count = [0]

    with open(trace_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRACE_COLUMNS)
        writer.writerow([_fmt(v) for v in trace_row(state)])
        fh.flush()

        def on_state(s):
            count[0] += 1
            save_checkpoint(s, outdir / f"step_{count[0]:04d}.json")
            writer.writerow([_fmt(v) for v in trace_row(s)])
            fh.flush()

        try:
            flow_to(state, rho, drho=drho, steps_max=args.steps_max, on_state=on_state)
        except FlowError as err:
            print(f"flow failed: {err}", file=out)
            return EXIT_FLOW
    print(f"{count[0]} steps, trace in {trace_path}", file=out)
    return EXIT_OK


def cmd_reconstruct(args, out=sys.stdout):
    from .reconstruct import ClosingError, export_mesh, immersion_grid
    if args.resume is None:
        raise UsageError("reconstruct needs --resume CHECKPOINT")
    n_u, n_v = parse_grid(args.grid)
    try:
        state = load_checkpoint(args.resume)
    except (OSError, ValueError) as err:
        print(f"cannot read checkpoint: {err}", file=out)
        return EXIT_CLOSING
    try:
        mesh = immersion_grid(state, n_u, n_v)
    except ClosingError as err:
        print(f"closing error: {err}", file=out)
        return EXIT_CLOSING
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    path = outdir / f"mesh.{args.format}"
    export_mesh(mesh, path, args.format)
    print(f"H = {mesh.H:.12g}, projection shift {mesh.projection_shift:.2e}", file=out)
    print(f"wrote {path}", file=out)
    return EXIT_OK


def _checks():
    """Quick invariant checks: (name, callable returning (ok, detail))."""
    from .elliptic import eta_constants, theta, wp, wp_prime
    from .flow import flow_residual, state_from_dict, state_to_dict
    from .mehta_seshadri import ms_alpha_batch
    from .reconstruct import covering_data

    def legendre():
        err = max(abs(e1 * t / 2 - e3 / 2 - np.pi * 1j / 2)
                  for t in (0.5j, 1j, 2j) for e1, e3 in [eta_constants(t)])
        return err < 1e-10, f"{err:.1e}"

    def theta_qp():
        rng = np.random.default_rng(0)
        tau = 0.3 + 1.1j
        w = rng.uniform(-1, 1, 50) + 1j * rng.uniform(-1, 1, 50)
        th = theta(w, tau)
        e1 = np.max(np.abs(theta(w + 1, tau) - th))
        e2 = np.max(np.abs(theta(w + tau, tau) + th * np.exp(-2j * np.pi * w)))
        return max(e1, e2) < 1e-12, f"{max(e1, e2):.1e}"

    def wp_ode():
        from .elliptic import half_period_values
        tau = 1.3j
        e = half_period_values(tau)
        z = np.array([0.21 + 0.3j, 0.4 + 0.1j, 0.13 + 0.5j])
        p = wp(z, tau)
        lhs = wp_prime(z, tau) ** 2
        rhs = 4 * (p - e[0]) * (p - e[1]) * (p - e[2])
        err = np.max(np.abs(lhs - rhs) / np.abs(rhs))
        return err < 1e-9, f"{err:.1e}"

    def ms_rho0():
        tau = 1j
        chi = 0.3 * np.exp(2j * np.pi * np.arange(16) / 16)
        a = ms_alpha_batch(0.0, chi, tau, np.conj(chi) + 0.01)
        err = np.max(np.abs(a - np.conj(chi)))
        return err < 1e-8, f"{err:.1e}"

    def seed_residual():
        s = homogeneous_seed(1j)
        err = float(np.linalg.norm(flow_residual(s)))
        return err < 1e-8, f"{err:.1e}"

    def delaunay_periods():
        b = delaunay_base(1j)
        ok = b.a < 0 < b.b and 0 < b.s0 < 0.5 and b.area > 0
        return ok, f"a={b.a:.4f} b={b.b:.4f} s0={b.s0:.4f}"

    def covering():
        c = covering_data("1/6")
        ok = (c.p, c.q, c.genus, c.branch_order, c.umbilic_order) == (1, 3, 2, 0, 1)
        return ok, f"{c}"

    def roundtrip():
        s = homogeneous_seed(1.2j)
        d = state_to_dict(s)
        back = state_from_dict(d)
        return state_to_dict(back) == d, "schema round trip"

    return [("Legendre relation", legendre), ("theta quasi-periodicity", theta_qp),
            ("wp differential equation", wp_ode), ("MS closed form at rho=0", ms_rho0),
            ("homogeneous seed residual", seed_residual),
            ("Delaunay base constants", delaunay_periods),
            ("covering arithmetic", covering), ("checkpoint round trip", roundtrip)]


def cmd_validate(args, out=sys.stdout):
    ok_all = True
    width = 28
    print(f"{'check':<{width}} result  detail", file=out)
    for name, fn in _checks():
        t0 = time.perf_counter()
        try:
            ok, detail = fn()
        except Exception as err:  # report, do not crash the table
            ok, detail = False, f"{type(err).__name__}: {err}"
        ok_all &= bool(ok)
        dt = time.perf_counter() - t0
        print(f"{name:<{width}} {'pass' if ok else 'FAIL':<6}  {detail} ({dt:.2f} s)", file=out)
    return EXIT_OK if ok_all else EXIT_VALIDATE


_COMMANDS = {"seed": cmd_seed, "flow": cmd_flow, "reconstruct": cmd_reconstruct,
             "validate": cmd_validate}


def main(argv=None, out=None):
    out = sys.stdout if out is None else out
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return EXIT_INPUT if err.code else EXIT_OK
    try:
        _threads()
        args = _merge(args)
        return _COMMANDS[args.command](args, out=out)
    except (UsageError, DomainError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
