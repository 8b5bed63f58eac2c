"""Exception hierarchy shared across the package."""


class JoinpointError(Exception):
    """Base class for all package errors."""


class SingularSystemError(JoinpointError, ValueError):
    """A linear system (break-point constraints, Fisher block) is singular."""


class OutOfRangeError(JoinpointError, ValueError):
    """A change-point location lies outside the open observation window."""


class NonFiniteError(JoinpointError, FloatingPointError):
    """A log-mean overflowed the guarded range."""


class NonPositiveError(JoinpointError, ValueError):
    pass


class DegeneratePriorError(JoinpointError, ValueError):
    """The Bayes2 model prior is undefined for fewer than two joinpoints."""


class OutsideOmegaError(JoinpointError, ValueError):
    """Change-point locations violate the ordered minimum-gap region."""


class InvalidConfigError(JoinpointError, ValueError):
    pass


class MalformedInputError(JoinpointError, ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class EmptyDrawsError(JoinpointError, ValueError):
    pass


class UnknownParameterError(JoinpointError, KeyError):
    pass


class MissingForecastPopulationError(JoinpointError, ValueError):
    pass


class SingularDesignError(JoinpointError, ValueError):
    pass


class NoConvergenceError(JoinpointError, RuntimeError):
    pass


class EmptyGridError(JoinpointError, ValueError):
    pass


class InvalidScenarioError(JoinpointError, ValueError):
    pass
