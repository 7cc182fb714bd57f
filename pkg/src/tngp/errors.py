"""Exception hierarchy.

Every error carries an ``exit_code`` so the command line can map failures
onto its documented codes without inspecting messages.
"""


class TngpError(Exception):
    exit_code = 4


class ConfigError(TngpError, ValueError):
    """Invalid configuration or input file."""

    exit_code = 2


class UsageError(TngpError, ValueError):
    """An operation was called with arguments outside its contract."""

    exit_code = 2


class DomainError(UsageError):
    """An input coordinate lies outside the feature map's domain."""


class StructuralError(UsageError):
    """Array shapes disagree with the network description."""


class CapacityError(UsageError):
    """An exhaustive computation would exceed its size guard."""


class UnsupportedActivationError(UsageError):
    pass


class NumericalError(TngpError, ArithmeticError):
    exit_code = 4


class NumericOverflowError(NumericalError):
    def __init__(self, site, message=None):
        self.site = site
        super().__init__(message or f"non-finite value after contracting site {site}")


class EstimatorUnstableError(NumericalError):
    pass


class StepSizeError(NumericalError):
    pass


class NotPSDError(NumericalError):
    def __init__(self, message, min_eigenvalue=None):
        self.min_eigenvalue = min_eigenvalue
        super().__init__(message)


class StatisticsError(TngpError):
    exit_code = 3


class DegenerateSampleError(StatisticsError, ValueError):
    pass


class SearchFailedError(StatisticsError):
    def __init__(self, message, diagnostics=None):
        self.diagnostics = diagnostics or {}
        super().__init__(message)
