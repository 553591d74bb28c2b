"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes: data/configuration problems
exit with 2, estimation failures with 3, verification failures with 4.
"""


class OslogitError(Exception):
    """Base class for all package errors."""


class DataError(OslogitError):
    """Malformed input data: parse failures, non-binary labels, bad shapes."""


class ConfigError(OslogitError):
    """Invalid run configuration (budgets, column indexes, option values)."""


class EstimationError(OslogitError):
    """A fit could not be completed."""


class SeparationError(EstimationError):
    """The labels are (quasi-)separable; the MLE diverges."""


class SingularMatrixError(EstimationError):
    """A matrix that must be solved is singular or numerically unusable."""


class DegenerateProbabilityError(EstimationError):
    """Every subsampling score is zero; no probability vector exists."""


class VerificationError(OslogitError):
    """A requested matrix-ordering verification did not hold."""
