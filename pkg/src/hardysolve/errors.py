"""Exception types shared across the package."""


class HardySolveError(Exception):
    """Base class for all package errors."""


class ConfigError(HardySolveError, ValueError):
    """Bad parameters, malformed config or too coarse a resolution."""


class DomainError(HardySolveError, ValueError):
    """A point or quantity lies outside its admissible set."""


class ResolutionError(ConfigError):
    """The grid is too coarse to resolve a requested region."""


class ConditionViolated(HardySolveError):
    """A structural hypothesis on the parameters fails.

    ``clause`` names the failing part so callers can report it.
    """

    def __init__(self, message, clause=None):
        super().__init__(message)
        self.clause = clause


class HypothesisError(ConditionViolated):
    """A solver precondition tied to a structural hypothesis fails."""


class EmptyProblemError(HardySolveError):
    """Restriction removed every unknown."""


class CoercivityError(HardySolveError):
    """The quadratic form is not positive; check lambda, mu and nu."""


class SolverError(HardySolveError):
    """An iterative solve did not converge.

    ``residuals`` holds whatever residuals were attained.
    """

    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals


class TheoryViolation(HardySolveError):
    """A computed quantity contradicts a proven bound (discretization bug)."""


class InconclusiveError(HardySolveError):
    """Not enough eigenvalues were computed to decide a condition."""


class RayRangeError(HardySolveError):
    """No interior maximum of the energy along a ray within the scan range."""


class PreconditionError(HardySolveError, ValueError):
    """Inputs do not satisfy a documented precondition."""
