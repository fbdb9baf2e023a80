"""Critical-point search for J and for J0 on the mass sphere."""

from .common import Deflation, SolutionReport, SolverConfig, disjoint_seeds, k_seeds, positive_bump
from .normalized import check_mass_subcritical, normalized_multi, normalized_newton, normalized_solve
from .unconstrained import deflated_newton, mountain_pass, multi_solve, nehari_solve, nodal_scale

__all__ = [
    "Deflation", "SolutionReport", "SolverConfig", "check_mass_subcritical", "deflated_newton",
    "disjoint_seeds", "k_seeds", "mountain_pass", "multi_solve", "nehari_solve", "nodal_scale",
    "normalized_multi", "normalized_newton", "normalized_solve", "positive_bump",
]
