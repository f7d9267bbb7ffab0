"""Exception hierarchy.

Errors split into two families that the CLI maps onto distinct exit codes:
input problems (bad files, bad values, bad ordering) and statistical
degeneracy (nothing left to estimate from).
"""


class MarketCorrError(Exception):
    """Base class for every error raised by this package."""


class InputError(MarketCorrError, ValueError):
    """Malformed or invalid input data."""


class ParseError(InputError):
    """A file row could not be parsed."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
        if line is not None:
            where = f"{where}:{line}" if where else f"line {line}"
        super().__init__(f"{where}: {message}" if where else message)


class ValidationError(InputError):
    """A value violates a domain invariant (e.g. non-positive price)."""


class OrderingError(InputError):
    """Timestamps are not sorted where sorting is required."""

    def __init__(self, earlier, later, key=None):
        self.earlier = earlier
        self.later = later
        self.key = key
        stream = f" in stream {key}" if key is not None else ""
        super().__init__(
            f"timestamps out of order{stream}: {earlier} is followed by {later}"
        )


class StatisticsError(MarketCorrError):
    """Base class for statistical degeneracy."""


class InsufficientDataError(StatisticsError, ValueError):
    """Too few observations for the requested estimate."""


class DegenerateSeriesError(StatisticsError, ValueError):
    """A series has zero second moment, so normalization is undefined."""

    def __init__(self, message, instrument=None):
        self.instrument = instrument
        super().__init__(message)


class EmptyPanelError(StatisticsError, ValueError):
    """Alignment left no rows for downstream estimators."""


class UnderdeterminedFitError(StatisticsError, ValueError):
    """Fewer usable points than fit parameters allow."""
