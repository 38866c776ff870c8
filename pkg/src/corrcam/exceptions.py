"""Exception hierarchy shared by the library and the command-line tool."""


class CorrcamError(Exception):
    """Base class for all errors raised by corrcam."""

    exit_code = 1


class ConfigError(CorrcamError, ValueError):
    """Malformed or inconsistent configuration.

    Parameters
    ----------
    message : str
        Human readable description.
    line : int, optional
        1-based line number in the config text the error refers to.
    """

    exit_code = 2

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class CapacityError(CorrcamError, MemoryError):
    """A requested computation exceeds the configured memory budget."""

    exit_code = 3


class ConvergenceError(CorrcamError, RuntimeError):
    """An iterative fit stopped without meeting its convergence criterion.

    The last iterate is kept on ``result`` so callers can still inspect it.
    """

    exit_code = 4

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class QuadratureError(CorrcamError, RuntimeError):
    """Quadrature grid too coarse for the oscillation it must resolve."""

    exit_code = 4


class AliasingError(CorrcamError, ValueError):
    """Sampled spectrum does not fit inside the frequency grid."""

    exit_code = 2


class FormatError(CorrcamError, OSError):
    """Corrupt or unsupported file content."""

    exit_code = 5


class EmptyMaskWarning(UserWarning):
    """Phase subtraction produced an empty support mask."""
