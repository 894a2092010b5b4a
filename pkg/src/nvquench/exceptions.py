"""Exception hierarchy shared across the package."""


class NVQuenchError(Exception):
    """Base class for all package errors."""


class DomainError(NVQuenchError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class InconsistentInputError(NVQuenchError, ValueError):
    """Measured inputs contradict the reference benchmark beyond tolerance."""


class InsufficientDataError(NVQuenchError, ValueError):
    """Too few samples, bins or counts to perform the requested analysis."""


class RangeError(NVQuenchError, ValueError):
    """A requested axis point or window lies outside the data range."""


class RankDeficiencyError(NVQuenchError, ArithmeticError):
    """The normal matrix of a least-squares problem is singular."""


class DegenerateFitError(RankDeficiencyError):
    """Fit parameters are unidentifiable from the data (e.g. all-zero rates)."""


class ConfigError(NVQuenchError, ValueError):
    """Invalid run configuration."""


class ParseError(NVQuenchError, ValueError):
    """Malformed input file.

    Parameters
    ----------
    message : str
        Description of the problem.
    line : int, optional
        1-based line number where parsing failed.
    """

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
