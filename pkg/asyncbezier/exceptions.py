"""
*Exceptions raised by the asyncbezier package.*

All exceptions derive from builtin exception types. Hence, code catching
a :class:`ValueError` (or :class:`ArithmeticError`, :class:`LookupError`)
will catch the respective asyncbezier exception as well. The dedicated
subclasses exist to allow callers, first of all the command line, to
react differently, *e.g.* by mapping a diverged run to its own exit code.


Module documentation
====================

"""


class DimensionError(ValueError):
    """Raised if parameter vectors of different dimensions are combined."""


class DegenerateDirectionError(ValueError):
    """Raised if a direction vector has zero norm."""


class ParameterRangeError(ValueError):
    """Raised if a scalar parameter lies outside its admissible range."""


class DivergenceError(ArithmeticError):
    """
    Raised if a model or curve parameter becomes non-finite.

    Attributes
    ----------
    epoch : :class:`int`
        Local epoch in which training diverged, if raised during training.

    version : :class:`int`
        Global model version the server was about to produce, if raised
        during aggregation.

    """

    def __init__(self, message="", epoch=None, version=None):
        super().__init__(message)
        self.epoch = epoch
        self.version = version


class HistoryError(LookupError):
    """Raised if a model version is no longer present in the history."""


class ConfigurationError(ValueError):
    """
    Raised for invalid configurations.

    Attributes
    ----------
    key : :class:`str`
        Name of the offending configuration key, as ``section.key``.

    """

    def __init__(self, message="", key=""):
        super().__init__(message)
        self.key = key


class CurveFileError(ValueError):
    """
    Raised if a curve file cannot be parsed.

    Attributes
    ----------
    row : :class:`int`
        Row (one-based) of the offending entry.

    column : :class:`int`
        Column (one-based) of the offending entry.

    """

    def __init__(self, message="", row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column
