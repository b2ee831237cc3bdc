"""Exception hierarchy shared across the package."""


class BrfmobError(Exception):
    """Base class for all package errors."""


class DomainError(BrfmobError, ValueError):
    """An argument lies outside the domain of a function (rank, probability...)."""


class UnsupportedShapeError(BrfmobError, ValueError):
    """The requested quantity does not exist for these shape parameters."""


class NumericError(BrfmobError, ArithmeticError):
    """An iterative numeric routine failed to converge."""


class InsufficientDataError(BrfmobError, ValueError):
    """Too few usable observations for the requested operation."""


class IngestionError(BrfmobError):
    """A data file could not be parsed.

    ``row`` is the 1-based line number in the file when the problem is tied to
    a specific line, otherwise ``None``.
    """

    def __init__(self, message, path=None, row=None):
        where = ""
        if path is not None:
            where += f"{path}"
        if row is not None:
            where += f":{row}"
        super().__init__(f"{where}: {message}" if where else message)
        self.path = path
        self.row = row


class UsageError(BrfmobError, ValueError):
    """Inconsistent or invalid arguments supplied by the caller."""


class BatchError(BrfmobError):
    """No day of a batch could be processed."""
