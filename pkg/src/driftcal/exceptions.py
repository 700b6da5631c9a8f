"""Exception hierarchy for the calibration workbench.

Every failure mode raised by this package derives from DriftcalError so
callers can catch broadly; the subclasses exist because the CLI maps them
to distinct exit codes and tests assert on the specific category.
"""


class DriftcalError(Exception):
    """Base class for all errors raised by driftcal."""


class InvalidArgumentError(DriftcalError, ValueError):
    """An argument violates a documented precondition (shape, range, length)."""


class NonInvertibleModelError(DriftcalError):
    """The sensor response is not strictly increasing on the requested interval."""


class ConvergenceError(DriftcalError):
    """An iterative solver failed to reach its tolerance within its budget."""


class IllConditionedError(DriftcalError):
    """A least-squares normal matrix is numerically singular."""


class InsufficientDataError(DriftcalError, ValueError):
    """Too few samples for a well-posed fit."""


class DegenerateInputError(DriftcalError, ValueError):
    """Input data lacks the variation required by the fit (e.g. constant series)."""


class ZeroFilterError(DriftcalError, ValueError):
    """An all-zero tap vector where nonzero energy is required."""


class DivergenceError(DriftcalError):
    """Training produced a non-finite loss."""


class EmptyDatasetError(DriftcalError, ValueError):
    """A training dataset contains no examples."""


class ConfigError(DriftcalError, ValueError):
    """Configuration text failed to parse or violated an invariant."""
