"""Exception hierarchy shared by the library and the CLI."""


class ProjectedLSError(Exception):
    """Base class for every error raised by this project."""


class DataError(ProjectedLSError, ValueError):
    """Input data cannot be used as given."""


class ParseError(DataError):
    """A CSV file is malformed or lacks its header row."""


class LabelCardinality(DataError):
    """The label column does not hold exactly two distinct values."""


class AllMissing(DataError):
    """A feature column has no observed values to impute from."""


class InsufficientRows(DataError):
    """Sampling without replacement ran out of rows."""


class NumericalError(ProjectedLSError, ArithmeticError):
    """A numerical routine could not produce a trustworthy result."""


class NotPositiveDefinite(NumericalError):
    """Cholesky factorization hit a non-positive pivot.

    Usually means the design matrix is rank deficient; add ridge (lambda > 0)
    or use more labeled objects than features.
    """


class DegenerateDenominator(NumericalError):
    """A ratio was requested against a zero supervised loss."""


class DimensionTooLarge(NumericalError):
    """An exhaustive routine was asked to run on too many coordinates."""


class GuaranteeViolation(NumericalError):
    """A converged projected fit had a higher loss than its supervised fit."""


class AllTrialsFailed(NumericalError):
    """Every trial of an experiment was skipped."""


class ReportIOError(ProjectedLSError, OSError):
    """A report file could not be written or read."""
