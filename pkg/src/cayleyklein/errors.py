"""Exception hierarchy.

Errors fall into three families that the command line maps onto exit
codes: usage errors, data errors, and numerical failures.
"""


class CayleyKleinError(Exception):
    """Base class for every error raised by this package."""


# -- data errors -------------------------------------------------------------

class DataError(CayleyKleinError):
    pass


class DimensionMismatch(DataError, ValueError):
    pass


class DomainViolation(DataError, ValueError):
    pass


class ParseError(DataError):
    def __init__(self, message, row=None, column=None):
        self.row = row
        self.column = column
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class EmptyDataset(DataError):
    pass


class RaggedRows(DataError):
    pass


class SchemaError(DataError):
    pass


class InvariantViolation(DataError):
    pass


class ClassTooSmall(DataError):
    pass


class ProtocolInfeasible(DataError):
    pass


class DuplicateSites(DataError):
    pass


class OutOfDomainSite(DomainViolation):
    pass


class CoincidentSites(DataError):
    pass


class EmptyScene(DataError):
    pass


class BadKappa(DataError, ValueError):
    pass


# -- numerical failures ------------------------------------------------------

class NumericalFailure(CayleyKleinError, ArithmeticError):
    pass


class NotPositiveDefinite(NumericalFailure):
    pass


class SingularBlock(NumericalFailure):
    pass


class InconsistentForm(NumericalFailure):
    pass


class DegenerateForm(NumericalFailure):
    pass


class DegenerateLine(NumericalFailure):
    pass


class DegenerateShape(NumericalFailure):
    pass


class NonpositiveRadius(NumericalFailure):
    pass


class SingularCovariance(NumericalFailure):
    pass


class Diverged(NumericalFailure):
    pass
