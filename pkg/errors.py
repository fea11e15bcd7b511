"""
Exception hierarchy shared by every module, plus the CLI exit codes they map to.
"""
from typing import Optional


EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERICAL = 3


class OOSR2Error(Exception):
    """Base class for every error raised by the library."""

    exit_code = 1


# ---------------------------------------------------------------------------
# Input errors (exit code 2)
# ---------------------------------------------------------------------------
class InputError(OOSR2Error):
    """Bad input: files, flags, configuration, prior reports."""

    exit_code = EXIT_INPUT


class IngestionError(InputError):
    """A CSV cell or shape that cannot become a Dataset."""

    def __init__(self, message: str, row: Optional[int] = None, column: Optional[str] = None):
        self.row = row
        self.column = column
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column '{column}'")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class ConfigError(InputError):
    """Invalid RunConfig / PredictorSpec / CLI flag combination."""


class ScenarioError(InputError):
    """Invalid scenario file entry."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


# ---------------------------------------------------------------------------
# Numerical errors (exit code 3)
# ---------------------------------------------------------------------------
class NumericalError(OOSR2Error):
    """Degenerate or inconsistent numbers."""

    exit_code = EXIT_NUMERICAL


class UndefinedR2Error(NumericalError):
    """Zero total variance: R² undefined."""


class TrainingError(NumericalError):
    """A predictor could not be trained on a (sub)dataset."""

    def __init__(self, message: str, repeat: Optional[int] = None, fold: Optional[int] = None):
        self.repeat = repeat
        self.fold = fold
        if repeat is not None or fold is not None:
            message = f"{message} (repeat {repeat}, fold {fold})"
        super().__init__(message)


class DegenerateComparisonError(NumericalError):
    """Variance of an R² difference is not positive."""


class InsufficientReplicatesError(NumericalError):
    """Too few usable bootstrap/jackknife replicates for the request."""
