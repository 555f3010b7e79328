"""
The unitarizing section alpha(chi)
==================================

For each holomorphic line bundle chi on the 4-punctured torus there is a
unique dw-coefficient alpha making the monodromy unitarizable.  At rho = 0
it is simply conj(chi); for rho > 0 it picks up a first order pole at
the half-lattice points.  This script samples both regimes.
"""

import numpy as np

from whitham.mehta_seshadri import ms_alpha, ms_alpha_circle, ms_residue_probe
from whitham.monodromy import ConnectionPoint, monodromies

tau = 1j
chi = 0.35 * np.exp(2j * np.pi * np.arange(8) / 8)

for rho in (0.0, 0.05, 0.1, 0.2):
    alpha = ms_alpha_circle(rho, chi, tau)
    dev = np.max(np.abs(alpha - np.conj(chi)))
    print(f"rho = {rho:4.2f}: max |alpha - conj(chi)| on the circle = {dev:.3e}")

# The traces of both generator monodromies are real and inside [-2, 2].
s = ms_alpha(0.1, 0.3 + 0.1j, tau)
m = monodromies(ConnectionPoint(0.1, 0.3 + 0.1j, s.alpha, tau))
print(f"\nalpha = {s.alpha:.10f}, residual {s.residual_norm:.1e}")
print(f"traces: {m.t1.real:.10f}, {m.t2.real:.10f} "
      f"(imaginary parts {abs(m.t1.imag):.1e}, {abs(m.t2.imag):.1e})")

# Near chi = 0 the product chi * alpha tends to the residue, linear in rho.
for rho in (0.025, 0.05, 0.1):
    r = ms_residue_probe(rho, tau, 0, 1e-2)
    print(f"rho = {rho:5.3f}: residue {r.real:.7f}  (pi rho / |tau - conj tau| "
          f"= {np.pi * rho / 2:.7f})")
