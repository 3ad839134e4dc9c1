"""Exception taxonomy shared across the package."""


class ScslitError(Exception):
    """Base class for all package errors."""


class DomainError(ScslitError, ValueError):
    """An argument lies outside the mathematical domain of the operation."""


class ConfigError(ScslitError, ValueError):
    """A scenario configuration is invalid (CLI exit code 2)."""


class IntegrationError(ScslitError):
    """Quadrature failed to converge. Carries the offending subinterval."""

    def __init__(self, message, interval=None, achieved=None):
        super().__init__(message)
        self.interval = interval
        self.achieved = achieved


class RootNotFoundError(ScslitError):
    """A bracketing root search found no sign change."""


class DegeneracyError(ScslitError):
    """Two prevertices coincide (or are closer than permitted)."""

    def __init__(self, message, pair=None):
        super().__init__(message)
        self.pair = pair


class StiffnessError(ScslitError):
    """Adaptive step size underflowed. Carries the last accepted state."""

    def __init__(self, message, last_state=None, trace=None):
        super().__init__(message)
        self.last_state = last_state
        self.trace = trace


class OrderingError(ScslitError):
    """Prevertex ordering was violated on an accepted step (internal invariant)."""


class ConditioningError(ScslitError):
    """A linear solve hit a Jacobian that is singular to working tolerance."""


class StepDampingError(ScslitError):
    """Damped Newton could not find an acceptable step inside the ordered cone."""
