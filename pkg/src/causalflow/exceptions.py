"""Exception hierarchy.

Every error carries the module and operation that raised it plus the
offending parameter, so the CLI can print a structured diagnostic.
"""


class CausalFlowError(Exception):
    """Base class for all package errors."""

    module = "causalflow"

    def __init__(self, message, *, operation=None, parameter=None):
        super().__init__(message)
        self.message = message
        self.operation = operation
        self.parameter = parameter

    def to_dict(self):
        return {
            "error": type(self).__name__,
            "module": self.module,
            "operation": self.operation,
            "parameter": self.parameter,
            "message": self.message,
        }


class ConfigurationError(CausalFlowError, ValueError):
    module = "config"


class DataError(CausalFlowError, ValueError):
    module = "data"


class EstimationError(CausalFlowError, ValueError):
    module = "ensemble"


class NumericalError(CausalFlowError, ArithmeticError):
    """A matrix that must be positive definite failed to factorize.

    ``pivot`` is the zero-based index of the leading minor that failed.
    """

    module = "numerics"

    def __init__(self, message, *, pivot=None, **kwargs):
        super().__init__(message, **kwargs)
        self.pivot = pivot

    def to_dict(self):
        out = super().to_dict()
        out["pivot"] = self.pivot
        return out


class CapacityError(CausalFlowError, MemoryError):
    module = "oracle"


class FitError(CausalFlowError, ValueError):
    module = "stats"


class InsufficientResamplesError(CausalFlowError, ValueError):
    module = "stats"


class LayoutError(CausalFlowError, ValueError):
    module = "synth"
