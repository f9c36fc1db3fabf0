"""Monte Carlo laboratory for long line segments inside large subsets of
high-dimensional bodies.

The package samples uniform points of volume-one l_p balls and related
measures, builds thin-shell witness sets with exact line intersectors,
perturbs samples along random directions to certify long intersections, and
fits scaling exponents of the resulting lengths.
"""

from longlines.core import (
    BumpFn,
    LpBall,
    Segment,
    a_tilde,
    a_tilde_limit,
    bump_phi,
    kappa,
    lp_norm,
    phi_bump,
    psi_bump,
    psi2,
)
from longlines.rng import RandomStream

__version__ = "0.1.0"

__all__ = [
    "BumpFn",
    "LpBall",
    "RandomStream",
    "Segment",
    "a_tilde",
    "a_tilde_limit",
    "bump_phi",
    "kappa",
    "lp_norm",
    "phi_bump",
    "psi_bump",
    "psi2",
    "__version__",
]
