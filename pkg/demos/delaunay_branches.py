"""
Two flows out of a 2-lobed Delaunay torus
=========================================

The Delaunay torus with spectral modulus tau_s = i has an elliptic
spectral curve.  Two flows leave it, told apart by the sign of the
interior residue at the branch point [1/2].  The + branch continues
smoothly; the - branch folds back almost immediately, and the solver
reports where.
"""

import numpy as np

from whitham.flow import TurningPointError, delaunay_base, delaunay_seed, flow_step

b = delaunay_base(1j)
print(f"a = {b.a:.15f}  (-1/pi = {-1 / np.pi:.15f})")
print(f"b = {b.b:.15f}, s0 = {b.s0:.6f}, tau = {b.tau_from_spec:.6f}, area = {b.area:.6f}")
print(f"periods = {b.periods[0].real:.12f}, {abs(b.periods[1]):.1e}")

plus = flow_step(delaunay_seed(1j, sign=1), 0.005)
print(f"\n+ branch at rho = {plus.rho}: tau_s = {plus.tau_spec:.8f}, "
      f"interior residue {plus.diagnostics['interior_residue']:.3e}")

try:
    flow_step(delaunay_seed(1j, sign=-1), 0.005)
except TurningPointError as err:
    print(f"- branch: {err}")
    print(f"  fold located near rho = {err.diagnostics['turning_point']:.2e}")
