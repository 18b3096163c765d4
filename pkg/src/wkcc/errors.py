"""Exception hierarchy shared by every module."""


class WkccError(Exception):
    """Base class for all errors raised by this package."""


class DataError(WkccError):
    """Invalid input data (maps to CLI exit code 3)."""


class NonMonotoneQuantiles(DataError):
    def __init__(self, message, ident=None):
        super().__init__(message)
        self.ident = ident


class OutOfDomain(DataError):
    pass


class GridMismatch(DataError):
    pass


class EmptyInput(DataError):
    pass


class EmptySamples(DataError):
    pass


class ParseError(DataError):
    def __init__(self, message, line=None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


class MissingHeader(ParseError):
    pass


class ColumnCountMismatch(ParseError):
    pass


class LengthMismatch(DataError):
    pass


class SingleCluster(DataError):
    pass


class TooFewPoints(DataError):
    pass


class DegenerateData(DataError):
    pass


class DimensionTooLarge(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class SingularReference(DataError):
    pass


class EmptyCluster(DataError):
    pass


class UnknownDesign(WkccError):
    pass


class SpecError(WkccError):
    pass


class DomainError(WkccError):
    pass


class SolverFailure(WkccError):
    """An iterative solver did not reach its tolerance (CLI exit code 4)."""


class NoConvergence(SolverFailure):
    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result
