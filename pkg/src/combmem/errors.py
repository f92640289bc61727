"""Exception hierarchy shared by all modules.

Input problems derive from :class:`InputError` (CLI exit status 2); numerical
failures derive from :class:`NumericalError` (CLI exit status 3).
"""


class CombMemError(Exception):
    """Base class for every error raised by this package."""


class InputError(CombMemError, ValueError):
    """Invalid user input: parameters, files or protocol settings."""


class ValidationError(InputError):
    """A value violates the invariants of a domain type.

    ``key`` names the offending field when known.
    """

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class FormatError(InputError):
    """A data file or series does not have the expected layout."""


class DataError(InputError):
    """Measurement data cannot support the requested estimate."""


class NumericalError(CombMemError, ArithmeticError):
    """A computation could not reach the requested accuracy."""


class TruncationError(NumericalError):
    """A time grid cuts off a significant part of the pulse."""


class AccuracyError(NumericalError):
    """A discretisation is too coarse for the stated accuracy."""


class RangeError(NumericalError):
    """A requested window lies outside the simulated interval."""


class ObjectiveError(NumericalError):
    """Every objective evaluation of an optimisation failed."""


class EstimationError(NumericalError):
    """A statistical estimate is not supported by the data (e.g. too noisy)."""


class ConvergenceError(NumericalError):
    """An iterative solver stopped before meeting its tolerance.

    The last iterate and diagnostic information are attached.
    """

    def __init__(self, message, iterate=None, diagnostics=None):
        super().__init__(message)
        self.iterate = iterate
        self.diagnostics = diagnostics or {}
