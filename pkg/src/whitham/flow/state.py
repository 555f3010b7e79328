"""Flow states, truncated series and the JSON checkpoint format."""

import json
from dataclasses import dataclass, field, replace

import numpy as np

SCHEMA_VERSION = 1

__all__ = [
    "SCHEMA_VERSION",
    "ChiSeries",
    "FlowState",
    "FlowError",
    "BifurcationProximityError",
    "TurningPointError",
    "state_to_dict",
    "state_from_dict",
    "save_checkpoint",
    "load_checkpoint",
]


class FlowError(RuntimeError):
    """A continuation step failed; carries the last diagnostics."""

    def __init__(self, message, diagnostics=None, trajectory=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
        self.trajectory = trajectory


class BifurcationProximityError(FlowError):
    """chi hits the Jacobian lattice on the sampling circle."""


class TurningPointError(FlowError):
    """The branch has a fold in rho; it does not continue past this rho."""


@dataclass(frozen=True)
class ChiSeries:
    """Real coefficient vector of the odd part of chi.

    Genus 0: coefficients of xi, xi^3, ..., xi^(2K-1).  Genus 1: mu, then
    f_0, f_1, ... in the correction y (mu / (lambda - 1/r) + f(lambda)).
    """

    kind: str
    coeffs: tuple

    def __post_init__(self):
        object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))

    @property
    def array(self):
        return np.array(self.coeffs, dtype=float)


@dataclass(frozen=True)
class FlowState:
    """One accepted (or candidate) point of a flow trajectory.

    Attributes
    ----------
    kind : {"genus0", "genus1"}
    rho : float
    tau : complex
        Domain modulus.
    R : float
        Genus 0: residue parameter (pole of alpha at xi = 0 is R pi i/(4 tau)).
        Genus 1: residue of alpha^rho / y at the branch point [1/2].
    tau_spec : complex or None
    sign : int or None
        Branch choice +1 / -1 for genus 1.
    chi : ChiSeries
    sym_xi : complex
        Preimage xi_1 of a Sym point.
    diagnostics : dict
        Residual norms and logged quantities.
    """

    kind: str
    rho: float
    tau: complex
    R: float
    chi: ChiSeries
    sym_xi: complex
    tau_spec: complex = None
    sign: int = None
    diagnostics: dict = field(default_factory=dict, compare=False)
    # Converged alpha samples of the last solve; only a warm start.
    cache: object = field(default=None, compare=False, repr=False)

    @property
    def coeffs(self):
        return self.chi.array

    @property
    def residual_norm(self):
        return float(self.diagnostics.get("residual_norm", np.nan))

    def with_(self, **kw):
        return replace(self, **kw)


def state_to_dict(state):
    """Checkpoint dictionary with the fixed schema."""
    ts = state.tau_spec
    sign = None if state.sign is None else ("+" if state.sign > 0 else "-")
    return {
        "kind": state.kind,
        "rho": float(state.rho),
        "tau_re": float(complex(state.tau).real),
        "tau_im": float(complex(state.tau).imag),
        "tau_spec_im": None if ts is None else float(complex(ts).imag),
        "sign": sign,
        "R": float(state.R),
        "coeffs": [float(c) for c in state.chi.coeffs],
        "sym_xi_re": float(complex(state.sym_xi).real),
        "sym_xi_im": float(complex(state.sym_xi).imag),
        "residual_norm": float(state.diagnostics.get("residual_norm", 0.0)),
        "schema_version": SCHEMA_VERSION,
        "solver": {k: state.diagnostics[k] for k in _SOLVER_KEYS if k in state.diagnostics},
    }


# Optional extras that make a resumed continuation replay the original one.
_SOLVER_KEYS = ("N", "du_drho", "dx1_drho", "interior_residue")


_REQUIRED = ("kind", "rho", "tau_re", "tau_im", "tau_spec_im", "sign", "R", "coeffs",
             "sym_xi_re", "sym_xi_im", "residual_norm", "schema_version")


def state_from_dict(d):
    """Inverse of :func:`state_to_dict`; raises ValueError on bad input."""
    if not isinstance(d, dict):
        raise ValueError("checkpoint must be a JSON object")
    missing = [k for k in _REQUIRED if k not in d]
    if missing:
        raise ValueError(f"checkpoint lacks fields {missing}")
    if d["schema_version"] != SCHEMA_VERSION:
        raise ValueError(f"unsupported schema version {d['schema_version']!r}")
    if d["kind"] not in ("genus0", "genus1"):
        raise ValueError(f"unknown kind {d['kind']!r}")
    sign = {None: None, "+": 1, "-": -1}.get(d["sign"], "bad")
    if sign == "bad":
        raise ValueError(f"bad sign {d['sign']!r}")
    ts = None if d["tau_spec_im"] is None else complex(0.0, float(d["tau_spec_im"]))
    if d["kind"] == "genus1" and ts is None:
        raise ValueError("genus-one checkpoint needs tau_spec_im")
    coeffs = [float(c) for c in d["coeffs"]]
    vals = [d["rho"], d["tau_re"], d["tau_im"], d["R"], d["sym_xi_re"], d["sym_xi_im"]] + coeffs
    if not all(np.isfinite(float(v)) for v in vals):
        raise ValueError("checkpoint contains non-finite numbers")
    return FlowState(
        kind=d["kind"],
        rho=float(d["rho"]),
        tau=complex(float(d["tau_re"]), float(d["tau_im"])),
        R=float(d["R"]),
        chi=ChiSeries(d["kind"], coeffs),
        sym_xi=complex(float(d["sym_xi_re"]), float(d["sym_xi_im"])),
        tau_spec=ts,
        sign=sign,
        diagnostics=_solver_extras(d.get("solver"), float(d["residual_norm"])),
    )


def _solver_extras(extra, residual_norm):
    diag = {"residual_norm": residual_norm}
    if extra is None:
        return diag
    if not isinstance(extra, dict):
        raise ValueError("solver block must be a JSON object")
    try:
        if "N" in extra:
            diag["N"] = int(extra["N"])
        if "du_drho" in extra:
            diag["du_drho"] = [float(v) for v in extra["du_drho"]]
        for k in ("dx1_drho", "interior_residue"):
            if k in extra:
                diag[k] = float(extra[k])
    except (TypeError, ValueError) as err:
        raise ValueError(f"bad solver block: {err}") from err
    return diag


def save_checkpoint(state, path):
    """Write a state as JSON; floats use the shortest round-tripping repr."""
    with open(path, "w") as fh:
        json.dump(state_to_dict(state), fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path):
    with open(path) as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as err:
            raise ValueError(f"corrupted checkpoint: {err}") from err
    return state_from_dict(d)
