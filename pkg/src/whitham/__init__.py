"""Generalized Whitham flow for CMC tori in S^3.

Spectral data of a CMC torus (a spectral curve and an odd map chi into the
Jacobian of the torus) are continued in the weight rho of a cone point,
keeping the Mehta-Seshadri unitarity condition and the Sym closing
condition.  Surfaces are reconstructed by parallel transport.

Submodules
----------
elliptic        theta and Weierstrass functions on a square-ish lattice
moduli          lattices, spectral curves, the real involution
monodromy       abelianized connection and its monodromies
mehta_seshadri  the unitarizable section alpha^rho
flow            seeds, residuals and the continuation in rho
reconstruct     unitarizer, frames and the immersion into S^3
cli             the ``whitham`` command
"""

from .elliptic import DomainError

__version__ = "0.1.0"

__all__ = ["DomainError", "__version__"]
