"""Exception hierarchy.

Everything derived from :class:`DataError` is a problem with user input
(malformed files, coverage gaps, infeasible requests); the CLI maps those
to exit code 2.
"""


class DataError(Exception):
    """Bad or inconsistent input data."""


class TraceFormatError(DataError):
    def __init__(self, message, path=None, row=None):
        self.path = path
        self.row = row
        where = []
        if path is not None:
            where.append(str(path))
        if row is not None:
            where.append(f"row {row}")
        prefix = ": ".join([", ".join(where)]) + ": " if where else ""
        super().__init__(prefix + message)


class DuplicateEventError(DataError):
    pass


class ZeroVarianceError(DataError):
    pass


class EmptySelectionError(DataError):
    pass


class UnknownFrequencyError(DataError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class CoverageError(DataError):
    pass


class MissingCounterError(DataError, KeyError):
    def __str__(self):
        return Exception.__str__(self)
