"""Nonsmooth Newton-like descent flows: semi-implicit integration of
0 in dphi1(x) + dphi2(x) + DF(x)(xdot) with per-run certificates
(energy dissipation, integral identity, stationarity of limits,
convergence-rate taxonomy) verified against closed-form benchmarks."""

__version__ = "0.1.0"

from .analysis import (
    KLParams,
    RateReport,
    dissipation_tail,
    fit_rate,
    min_distance_envelope,
    omega_limit_estimate,
    subregularity_modulus,
    sublinear_tail_exponents,
    value_tail_exponent,
    verify_kl,
)
from .errors import NewtonFlowError
from .flow import FlowConfig, Trajectory, energetic_check, integral_residual, integrate, step
from .operators import (
    OperatorSpec,
    bound_from_quadratic,
    graph_derivative,
    local_inverse,
    lower_definite_probe,
)
from .problem import (
    ObjectiveSplit,
    PlrCertificate,
    Region,
    SelectionRule,
    check_plr,
    eval_phi,
    stationarity_residual,
    subgrad_select,
)
from .smoothing import (
    EnvelopeParams,
    MollifierParams,
    mollify_phi2,
    moreau_grad,
    moreau_value,
    prox,
)
from .zoo import ZooProblem, builtin_registry, get_problem, zoo_list

__all__ = [
    "__version__",
    "NewtonFlowError",
    "Region",
    "SelectionRule",
    "ObjectiveSplit",
    "PlrCertificate",
    "eval_phi",
    "subgrad_select",
    "stationarity_residual",
    "check_plr",
    "EnvelopeParams",
    "MollifierParams",
    "prox",
    "moreau_value",
    "moreau_grad",
    "mollify_phi2",
    "OperatorSpec",
    "graph_derivative",
    "lower_definite_probe",
    "local_inverse",
    "bound_from_quadratic",
    "FlowConfig",
    "Trajectory",
    "step",
    "integrate",
    "integral_residual",
    "energetic_check",
    "RateReport",
    "KLParams",
    "omega_limit_estimate",
    "subregularity_modulus",
    "verify_kl",
    "fit_rate",
    "min_distance_envelope",
    "dissipation_tail",
    "sublinear_tail_exponents",
    "value_tail_exponent",
    "ZooProblem",
    "builtin_registry",
    "zoo_list",
    "get_problem",
]
