"""Optimal integer-lattice decisions under Gaussian error and their rates.

Layers: dense forms and basis reduction (lattice), searches and decision rules
(decoder), facet enumeration (voronoi), closed-form rate bounds (bounds),
importance-sampling estimators (montecarlo), the GNSS model front end (gnss),
and experiment drivers plus a CLI (experiments, cli).
"""

__version__ = "0.1.0"

from .decoder import (
    AmbiguityModel,
    DecisionOutcome,
    Separability,
    babai_nearest_plane,
    closest_lattice_point,
    conditional_decision,
    enumerate_within_radius,
    map_decision,
    truncated_posterior,
)
from .lattice import (
    CholeskyFactor,
    ReducedForm,
    SpdForm,
    UnimodularTransform,
    cholesky,
    complexity_estimate,
    lll_reduce,
    quadratic_form,
)
from .voronoi import RelevantVectorSet, is_relevant, relevant_vectors
from .bounds import (
    RateBoundResult,
    conditional_bounds,
    map_bounds,
    one_dim_error,
    one_dim_success,
    single_approximation,
    xi_from_h,
)
from .montecarlo import (
    ProposalForm,
    RateEstimate,
    kappa,
    mc_rate,
    mc_rate_shifted,
    optimize_proposal,
)

__all__ = [
    "AmbiguityModel", "DecisionOutcome", "Separability", "SpdForm",
    "UnimodularTransform", "CholeskyFactor", "ReducedForm", "RelevantVectorSet",
    "RateBoundResult", "ProposalForm", "RateEstimate",
    "babai_nearest_plane", "closest_lattice_point", "enumerate_within_radius",
    "truncated_posterior", "map_decision", "conditional_decision",
    "cholesky", "lll_reduce", "quadratic_form", "complexity_estimate",
    "relevant_vectors", "is_relevant",
    "one_dim_success", "one_dim_error", "xi_from_h",
    "map_bounds", "conditional_bounds", "single_approximation",
    "mc_rate", "mc_rate_shifted", "kappa", "optimize_proposal",
    "__version__",
]
