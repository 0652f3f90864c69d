"""Exception and warning types shared across the package."""


class MotionLabError(Exception):
    """Base class for all package errors."""


class DataError(MotionLabError):
    """Input data is malformed or violates a precondition."""


class NumericalError(MotionLabError):
    """A numerical routine could not produce a usable result."""


class AntipodalError(NumericalError):
    """Two sphere points are (nearly) antipodal, so the geodesic is not unique."""

    def __init__(self, message, part=None, index=None):
        self.part = part
        self.index = index
        where = []
        if index is not None:
            where.append(f"time index {index}")
        if part is not None:
            where.append(f"part {part}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class NotTangentError(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class ZeroBoneError(DataError):
    def __init__(self, part, norm):
        self.part = part
        super().__init__(f"bone {part} has near-zero length {norm:.3g}")


class ParseError(DataError):
    pass


class SchemaError(DataError):
    pass


class EmptyWindowError(NumericalError):
    """All kernel weights vanished at the query point."""


class GridMismatch(DataError):
    pass


class GridTooCoarse(DataError):
    pass


class BadInterval(DataError):
    pass


class SingularCovariance(NumericalError):
    pass


class SingularGram(NumericalError):
    pass


class RejectionStall(NumericalError):
    pass


class RankDeficient(NumericalError):
    pass


class ConvergenceWarning(UserWarning):
    """An iterative estimator stopped at its iteration cap."""
