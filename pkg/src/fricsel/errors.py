"""Exception types raised by the fricsel engine."""


class FricselError(Exception):
    """Base class for all fricsel errors."""


class RankDeficient(FricselError):
    """Design matrix does not have full column rank."""


class TooFewRows(FricselError):
    """Residual degrees of freedom below the supported minimum (m >= 3)."""


class SingularSubmodel(FricselError):
    """Submodel covariance block is numerically singular."""


class TooManySubsets(FricselError):
    """Free-column count exceeds the exhaustive-enumeration guardrail."""


class NonConvergence(FricselError):
    """A series or root search exceeded its iteration/parameter budget."""


class OutOfRange(FricselError):
    """Requested inversion target admits no nonnegative solution."""


class NotDiagonal(FricselError):
    """Operation requires a diagonal covariate second-moment matrix."""


class UnsupportedEnsemble(FricselError):
    """Exact confidence distributions exist only for the equal-weights ensemble."""


class ParseError(FricselError):
    """Malformed input file; carries the offending row and column when known."""

    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        super().__init__(message)
        self.row = row
        self.column = column


class NonNumeric(ParseError):
    """A cell expected to be numeric could not be parsed as a float."""


class MissingColumn(FricselError):
    """A configured column name is absent from the input header."""


class EmptyData(FricselError):
    """Input file contains a header but no data rows."""
