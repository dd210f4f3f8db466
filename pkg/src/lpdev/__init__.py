"""Sub-Gaussian / Orlicz-norm calculus, l_p matrix deviation and l2 -> l_p
Johnson-Lindenstrauss embedding, with Monte Carlo verification tooling."""

from lpdev.ensembles import DistributionSpec, SeededSampler, theoretical_psi2
from lpdev.lp_geometry import Exponent, lp_norm, rad_bq
from lpdev.orlicz import PsiAlphaEstimate, psi_alpha_norm

__version__ = "0.1.0"

__all__ = [
    "DistributionSpec",
    "Exponent",
    "PsiAlphaEstimate",
    "SeededSampler",
    "lp_norm",
    "psi_alpha_norm",
    "rad_bq",
    "theoretical_psi2",
]
