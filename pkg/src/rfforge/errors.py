"""Exception taxonomy shared by every module.

Each subtree carries one process exit code so the command line layer can
translate failures without string matching.
"""


class RfForgeError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 1


class ConfigError(RfForgeError):
    """Invalid configuration value or operation argument."""

    exit_code = 2


class DataError(RfForgeError):
    """The data cannot support the requested computation."""

    exit_code = 3


class SchemaError(DataError):
    """Column set or schema declaration does not match expectations."""


class ParseError(DataError):
    """A cell could not be parsed as a number."""

    def __init__(self, message: str, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


class ShapeError(DataError):
    """Array dimensions disagree."""


class RangeError(DataError):
    """A value lies outside its declared physical bounds."""


class DegenerateDataError(DataError):
    """Degenerate input: zero variance, empty window, all-missing column."""


class ConvergenceError(RfForgeError):
    """An iterative solver stopped before reaching tolerance."""

    exit_code = 4

    def __init__(self, message: str, violation=None):
        super().__init__(message)
        # worst remaining optimality violation, when the solver knows it
        self.violation = violation
