"""Exception and warning types shared across the package.

Each error class carries the process exit code the command-line front end
uses when the error escapes a command.
"""


class GPOpInfError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(GPOpInfError):
    """Invalid experiment configuration or command-line arguments."""

    exit_code = 2


class InvalidDimensionError(GPOpInfError, ValueError):
    exit_code = 2


class StructureError(GPOpInfError, ValueError):
    """Input violates a structural requirement (symmetry, shape, ...)."""

    exit_code = 2


class InsufficientDataError(GPOpInfError, ValueError):
    exit_code = 2


class FormatError(GPOpInfError):
    """Malformed matrix file; the message names the offending field."""

    exit_code = 3


class ArtifactIOError(GPOpInfError):
    exit_code = 3


class NumericalError(GPOpInfError, ArithmeticError):
    """A solver failed (singular system, non-convergence, ...)."""

    exit_code = 4


class UnsupportedError(GPOpInfError):
    exit_code = 2


class ParameterWarning(UserWarning):
    """A model parameter lies outside the documented range."""


class DeflationWarning(RuntimeWarning):
    """Near-singular modes were dropped in a Lyapunov solve."""
