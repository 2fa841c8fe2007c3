"""Exception hierarchy shared across the package.

Two broad families matter to callers: ``InputError`` (bad files, bad
configuration; CLI exit code 2) and ``NumericalError`` (a computation that
cannot proceed; CLI exit code 3).
"""


class DdsvlmmError(Exception):
    """Base class for all package-specific errors."""


class InputError(DdsvlmmError):
    """Malformed input data or configuration."""


class CurveParseError(InputError):
    """Bad row or inconsistent grid in a discount-curve CSV."""


class VolSurfaceParseError(InputError):
    """Bad row or duplicate key in a volatility-surface CSV."""


class NumericalError(DdsvlmmError):
    """A numerical computation failed or produced invalid results."""


class ShiftInfeasibleError(NumericalError):
    """Some displaced forward F_j(0) + delta is non-positive."""


class SingularEvaluationError(NumericalError):
    """Closed-form transform hit a branch singularity on some bucket."""

    def __init__(self, bucket: int, message: str = ""):
        self.bucket = bucket
        super().__init__(message or f"singular evaluation on bucket {bucket}")


class StripViolationError(NumericalError):
    """Real-axis transform argument left the finite-moment strip."""


class DampingError(NumericalError):
    """Contour damping parameter lies outside the analyticity strip."""


class TruncationError(NumericalError):
    """Contour integral tail failed to fall below tolerance."""


class InvalidParametersError(NumericalError):
    """Model parameters violate admissibility (or numerics failed)."""


class ExpansionInvalidError(NumericalError):
    """Standardized moments violate the moment inequality."""


class InversionError(NumericalError):
    """Implied-volatility inversion failed (price outside bounds)."""


class CalibrationFailedError(NumericalError):
    """No admissible point was found within the evaluation budget."""
