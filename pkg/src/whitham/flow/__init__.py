"""Continuation of spectral data in the weight rho.

Two families are supported: the homogeneous branch with spectral genus 0
(:mod:`.genus0`) and the two Delaunay branches with spectral genus 1
(:mod:`.genus1`).  The functions here dispatch on ``state.kind``.
"""

import numpy as np

from ..elliptic import DomainError
from . import genus0, genus1
from .genus0 import homogeneous_seed
from .genus1 import DelaunayBase, delaunay_base, delaunay_seed
from .state import (SCHEMA_VERSION, BifurcationProximityError, ChiSeries, FlowError, FlowState,
                    TurningPointError, load_checkpoint, save_checkpoint, state_from_dict,
                    state_to_dict)

__all__ = [
    "SCHEMA_VERSION",
    "BifurcationProximityError",
    "TurningPointError",
    "ChiSeries",
    "DelaunayBase",
    "FlowError",
    "FlowState",
    "alpha_modes",
    "chi_eval",
    "delaunay_base",
    "delaunay_seed",
    "flow_residual",
    "flow_step",
    "flow_to",
    "homogeneous_seed",
    "load_checkpoint",
    "save_checkpoint",
    "state_from_dict",
    "state_to_dict",
]

DRHO_CAP = 0.02


def _impl(state):
    if state.kind == "genus0":
        return genus0
    if state.kind == "genus1":
        return genus1
    raise DomainError(f"unknown state kind {state.kind!r}")


def chi_eval(state, xi):
    """chi(xi) in the d wbar trivialization."""
    return _impl(state).chi_eval(state, xi)


def alpha_modes(state, N=None):
    """Laurent modes of the flow operator's argument.

    Genus 0: modes of alpha^rho(chi(xi)) in xi.  Genus 1: negative modes of
    alpha^rho / y in lambda, see :func:`.genus1.g_modes`.
    """
    if state.kind == "genus1":
        return genus1.g_modes(state, N)
    return genus0.alpha_modes(state, N)


def flow_residual(state, N=None):
    """Full residual vector; see the per-genus modules for its layout."""
    return _impl(state).flow_residual(state, N)


def flow_step(state, drho, **kw):
    """One predictor-corrector step of size drho (|drho| <= 0.02)."""
    kw.setdefault("drho_cap", DRHO_CAP)
    return _impl(state).flow_step(state, drho, **kw)


def flow_to(state, rho_target, drho=0.01, steps_max=None, on_state=None, **kw):
    """Iterate :func:`flow_step` until rho reaches rho_target.

    Parameters
    ----------
    state : FlowState
        Starting point; it is the first element of the returned list.
    rho_target : float
        |rho_target| < 1/2.
    drho : float
        Nominal step; the last step is shortened to land on rho_target.
    steps_max : int, optional
        Give up after this many accepted steps.
    on_state : callable, optional
        Called with each accepted state (checkpointing hook).

    Returns
    -------
    list of FlowState

    Raises
    ------
    FlowError
        With ``trajectory`` holding the accepted states so far.
    """
    rho_target = float(rho_target)
    if not abs(rho_target) < 0.5:
        raise DomainError("rho_target must satisfy |rho_target| < 1/2")
    drho = abs(float(drho))
    if not 0 < drho <= DRHO_CAP:
        raise DomainError(f"drho must lie in (0, {DRHO_CAP}]")
    traj = [state]
    direction = np.sign(rho_target - state.rho)
    n = 0
    while abs(rho_target - state.rho) > 1e-12:
        if steps_max is not None and n >= steps_max:
            raise FlowError(f"step budget of {steps_max} exhausted at rho = {state.rho}",
                            dict(state.diagnostics), traj)
        h = direction * min(drho, abs(rho_target - state.rho))
        try:
            state = flow_step(state, h, **kw)
        except FlowError as err:
            err.trajectory = traj
            raise
        except Exception as err:
            raise FlowError(f"flow step failed at rho = {state.rho}: {err}",
                            dict(state.diagnostics), traj) from err
        if abs(rho_target - state.rho) < 1e-12:
            state = state.with_(rho=rho_target)
        traj.append(state)
        n += 1
        if on_state is not None:
            on_state(state)
    return traj
