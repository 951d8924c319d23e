"""Exception hierarchy shared across the package."""


class GcfkError(Exception):
    """Base class for every error raised by this package."""


class ZeroWelfareGradient(GcfkError, ValueError):
    """The welfare gradient is numerically zero, so the welfare constraint is vacuous."""


class SingularCurvature(GcfkError, ValueError):
    """An effective curvature matrix is not positive definite."""


class NonSymmetric(GcfkError, ValueError):
    pass


class NotAligned(GcfkError, ValueError):
    """A coalition direction has nonpositive welfare alignment; no benign threshold exists."""


class NonpositiveBaseline(GcfkError, ValueError):
    pass


class TrimTooLarge(GcfkError, ValueError):
    pass


class WeightDimensionMismatch(GcfkError, ValueError):
    pass


class SingularCovariance(GcfkError, ValueError):
    pass


class ZeroNoncentrality(GcfkError, ValueError):
    pass


class IndexOutOfRange(GcfkError, IndexError):
    pass


class AlreadySelected(GcfkError, ValueError):
    pass


class TooLarge(GcfkError, ValueError):
    pass


class DimensionMismatch(GcfkError, ValueError):
    pass


class InvalidConfig(GcfkError, ValueError):
    """Configuration failed validation. ``path`` names the offending key."""

    def __init__(self, message: str, path: str = ""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


class ParseError(InvalidConfig):
    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        loc = f"line {line}, column {column}: " if line is not None else ""
        super().__init__(loc + message)
        self.line = line
        self.column = column


class RangeError(InvalidConfig):
    pass


class IoFailure(GcfkError, OSError):
    pass
