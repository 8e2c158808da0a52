"""Exception hierarchy shared by all modules."""


class LpvError(Exception):
    """Base class for every error raised by lpvred."""


class DomainError(LpvError, ValueError):
    """A parameter value lies outside the parameter box."""


class DimensionError(LpvError, ValueError):
    """Inconsistent shapes or an out-of-range reduction order."""


class ValidationError(LpvError, ValueError):
    """An input violates a structural requirement (orthonormality, symmetry, ...)."""


class ConfigurationError(LpvError, ValueError):
    """Missing or contradictory configuration."""


class CapacityError(LpvError):
    """A request would enumerate too many objects."""


class StabilityError(LpvError):
    """A system that must be stable is not."""


class NumericalError(LpvError):
    """A numerical procedure blew up or failed to converge."""


class InfeasibleError(LpvError):
    """An LMI problem has no solution."""


class SolverError(NumericalError):
    """The SDP backend stalled or returned an unusable answer."""

    def __init__(self, message, best_iterate=None):
        super().__init__(message)
        self.best_iterate = best_iterate


class LyapunovConditioningWarning(RuntimeWarning):
    """The Lyapunov operator is close to singular; the Gramian may be inaccurate."""


class DegenerateModelError(NumericalError):
    """A normalizing quantity (e.g. the norm of the full model) vanishes."""


class SingularityError(NumericalError):
    """A frequency lies on the spectrum of A, so the resolvent does not exist."""
