"""Exception hierarchy shared by all modules."""


class SphsarError(Exception):
    """Base class for library errors."""


class DimensionMismatchError(SphsarError, ValueError):
    pass


class AntipodalError(SphsarError, ValueError):
    """Raised when a transport between (near-)antipodal points is requested."""


class ConvergenceError(SphsarError, RuntimeError):
    pass


class UnidentifiedError(SphsarError, RuntimeError):
    """The GMM objective does not depend on the spatial parameter."""


class SingularDesignError(SphsarError, ValueError):
    pass


class DataFormatError(SphsarError, ValueError):
    """Malformed input file. Carries optional row/column context."""

    def __init__(self, message, row=None, column=None):
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        if where:
            message = f"{', '.join(where)}: {message}"
        super().__init__(message)
        self.row = row
        self.column = column
