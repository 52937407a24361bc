"""Exception hierarchy shared by all modules."""


class HawkesImpactError(Exception):
    """Base class for package errors."""


class DomainError(HawkesImpactError, ValueError):
    """Argument outside the domain of the operation (negative time, bad exponent...)."""


class CriticalityError(HawkesImpactError, ValueError):
    """The kernel norm is too large for the requested operation."""


class AssumptionError(HawkesImpactError, ValueError):
    """A modelling assumption required by the operation does not hold."""


class MissingParameterError(HawkesImpactError, ValueError):
    pass


class ConfigurationError(HawkesImpactError, ValueError):
    """Invalid experiment or study configuration."""


class HorizonError(HawkesImpactError, ValueError):
    """Requested evaluation beyond the horizon a tabulated object represents."""


class InsufficientDataError(HawkesImpactError, ValueError):
    pass


class NumericalError(HawkesImpactError, RuntimeError):
    """A quadrature or solver failed to reach its tolerance."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class AccuracyWarning(UserWarning):
    """Result computed but its accuracy guarantee does not hold."""
