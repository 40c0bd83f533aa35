"""Synthesis and auditing of lift-bounded privacy mechanisms.

The library designs privatization mechanisms whose local information
privacy (two-sided log-lift) or max-lift (one-sided) leakage stays within
a budget eps, using the singular geometry of the operator
W = [sqrt(P_Y)^-1] P_{X|Y}^-1 [sqrt(P_X)], and audits them against exact
brute-force search. All information quantities are in nats.
"""

from .errors import (
    DegenerateSpectrum,
    EpsilonOutOfRange,
    InvalidInducedDistribution,
    LengthMismatch,
    LipgeoError,
    MixtureInconsistent,
    NoFeasiblePoint,
    NotNormalized,
    NotSquare,
    SingularKernel,
    SpectrumTie,
    TooManyParameters,
    ZeroMarginal,
    ZeroReference,
)
from .geometry import (
    Direction,
    GeometryContext,
    approx_mi_second_order,
    approx_mi_third_order,
    build_geometry,
    exact_mi_of_directions,
)
from .mechanisms import (
    ConstraintFamily,
    Mechanism,
    MechanismAudit,
    ScalingFactors,
    UtilityBounds,
    audit_mechanism,
    build_mechanism,
    scaling_factors,
    utility_bounds,
)
from .oracle import (
    ApproximationErrorRow,
    BoundsReport,
    OracleResult,
    approximation_error_report,
    bounds_report,
    chi2_baseline,
    exhaustive_search,
    thread_cap,
)
from .probability import (
    Distribution,
    ProblemInstance,
    StochasticKernel,
    instance_from_conditional,
    instance_from_joint,
    kl_divergence,
    lip_leakage,
    max_lift_leakage,
    mutual_information,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "Distribution",
    "StochasticKernel",
    "ProblemInstance",
    "instance_from_joint",
    "instance_from_conditional",
    "kl_divergence",
    "mutual_information",
    "lip_leakage",
    "max_lift_leakage",
    "Direction",
    "GeometryContext",
    "build_geometry",
    "approx_mi_second_order",
    "approx_mi_third_order",
    "exact_mi_of_directions",
    "ConstraintFamily",
    "ScalingFactors",
    "UtilityBounds",
    "Mechanism",
    "MechanismAudit",
    "scaling_factors",
    "utility_bounds",
    "build_mechanism",
    "audit_mechanism",
    "OracleResult",
    "ApproximationErrorRow",
    "BoundsReport",
    "exhaustive_search",
    "chi2_baseline",
    "approximation_error_report",
    "bounds_report",
    "thread_cap",
    "LipgeoError",
    "NotSquare",
    "NotNormalized",
    "ZeroMarginal",
    "SingularKernel",
    "LengthMismatch",
    "ZeroReference",
    "MixtureInconsistent",
    "DegenerateSpectrum",
    "InvalidInducedDistribution",
    "TooManyParameters",
    "NoFeasiblePoint",
    "EpsilonOutOfRange",
    "SpectrumTie",
]
