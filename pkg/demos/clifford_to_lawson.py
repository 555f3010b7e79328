"""
From the Clifford torus to the Lawson genus-2 surface
=====================================================

Start at the square torus tau = i, where the spectral data is linear in
xi and R = sqrt(2), and follow the flow in the cone parameter rho up to
rho = 1/6.  At that weight the surface closes as a 3-fold cover of the
sphere with four branch points and yields a genus-2 minimal surface.

Run with ``python demos/clifford_to_lawson.py`` (about a minute).
"""

from fractions import Fraction

import numpy as np

from whitham.flow import flow_to, homogeneous_seed
from whitham.reconstruct import covering_data, sym_points

seed = homogeneous_seed(1j)
print(f"seed: R = {seed.R:.15f}, sym_xi = {seed.sym_xi:.6f}")

# Each accepted step is a fully converged state; the Sym preimage stays
# on the diagonal because of the extra i-symmetry of the square torus.
traj = flow_to(seed, 1 / 6, drho=0.02)
print(f"{'rho':>8} {'R':>18} {'K':>4} {'arg sym_xi / pi':>16} {'H':>10}")
for s in traj:
    H = sym_points(s)[2]
    print(f"{s.rho:8.5f} {s.R:18.13f} {len(s.coeffs):4d} "
          f"{np.angle(s.sym_xi) / np.pi:16.12f} {H:10.1e}")

# The weight (2 rho + 1)/4 = 1/3 fixes the covering.
c = covering_data(Fraction(1, 6))
print(f"\nweight p/q = {c.p}/{c.q}: genus {c.genus}, branch order {c.branch_order}, "
      f"umbilic order {c.umbilic_order}")

# Higher Lawson-type weights for comparison.
for g in (3, 4, 5):
    rho = Fraction(g - 1, 2 * g + 2)
    c = covering_data(rho)
    print(f"rho = {rho}: genus {c.genus}, q = {c.q}")
