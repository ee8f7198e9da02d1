"""Exception hierarchy. Every failure the CLI reports maps to one of these."""


class NewtonFlowError(Exception):
    """Base class for all package errors."""


class ConfigError(NewtonFlowError):
    """Invalid configuration value (rejected before any run starts)."""


class DuplicateName(NewtonFlowError):
    """Two problems with the same name in a registry."""


class EmptySubdifferential(NewtonFlowError):
    """Subgradient oracle returned no vectors at the query point."""


class OutsideLocalization(NewtonFlowError):
    """Envelope/prox query outside the localization ball."""


class SolverDivergence(NewtonFlowError):
    """Inner solver failed to make progress."""


class MaxIterations(SolverDivergence):
    """Iteration cap reached before the tolerance."""


class RegionViolation(NewtonFlowError):
    """Mollification ball not contained in the working region."""


class RegionExit(NewtonFlowError):
    """Trajectory left the working region."""


class EnergyViolation(NewtonFlowError):
    """Discrete energy inequality failed after exhausting step halvings."""


class NonConvergentLimit(NewtonFlowError):
    """Directional difference quotients did not stabilize."""


class NonConvergent(NewtonFlowError):
    """Trajectory tail is not approaching the reference point."""


class EmptyTail(NewtonFlowError):
    """Trajectory too short for the requested tail window."""


class UnboundedModulus(NewtonFlowError):
    """Error-bound ratio is unbounded on the sampled ball."""


class NoValidSamples(NewtonFlowError):
    """No sample fell inside the requested level band."""


class DegenerateCoefficient(NewtonFlowError):
    """Leading coefficient of the quadratic bound is zero."""
