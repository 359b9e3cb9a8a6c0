"""Exception hierarchy shared by every module."""


class MixsmoothError(Exception):
    """Base class for all errors raised by the package."""


class InvalidInputError(MixsmoothError, ValueError):
    """An argument violates a documented precondition."""


class InvalidBandwidthError(InvalidInputError):
    pass


class UnsupportedOrderError(InvalidInputError):
    pass


class NonstationaryModelError(InvalidInputError):
    pass


class NumericalFailureError(MixsmoothError, ArithmeticError):
    """A quadrature or other numerical routine failed to converge."""


class DivergentIntegralError(NumericalFailureError):
    """An improper integral keeps growing under refinement.

    ``partial_values`` holds the running value after each refinement level so
    callers can report the growth instead of a number.
    """

    def __init__(self, message, partial_values=()):
        super().__init__(message)
        self.partial_values = tuple(partial_values)


class EmptySupremumError(MixsmoothError):
    """Every cell of a surface was undefined."""


class NoLocalDataError(MixsmoothError):
    """Zero total kernel weight at an evaluation point."""


class NoAnalyticTruthError(MixsmoothError):
    pass


class SampleParseError(MixsmoothError):
    pass


class ConfigError(MixsmoothError):
    """Configuration failed validation; ``problems`` lists every failure."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.problems))
