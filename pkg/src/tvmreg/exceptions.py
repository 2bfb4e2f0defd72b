"""Exception hierarchy.

Three branches matter for the CLI exit codes: configuration problems,
data/ingestion problems, and numerical failures.
"""


class TvmregError(Exception):
    """Base class for all library errors."""


class ConfigError(TvmregError):
    """Invalid configuration: bandwidths, contrast, trim range, flags."""


class DimensionError(ConfigError):
    """Array arguments with incompatible or unsupported dimensions."""


class OutOfRange(ConfigError):
    """Argument outside its documented domain (e.g. interpolation time)."""


class DataError(TvmregError):
    """Problems with input data files."""


class EmptyFile(DataError):
    pass


class ParseError(DataError):
    """Malformed input file; carries row/column location when known."""


class NonNumeric(ParseError):
    """A cell that should be numeric is not."""


class NumericalError(TvmregError):
    """Numerical failures inside solvers and estimators."""


class SingularDesign(NumericalError):
    """Weighted design matrix is rank deficient beyond ridge-jitter rescue."""


class NonConvergence(NumericalError):
    """Iterative solver hit its iteration cap without meeting tolerance."""


class InsufficientLocalData(NumericalError):
    """Too few observations carry positive kernel weight in a local window."""


class SingularSystem(NumericalError):
    """A small linear system that should be well posed is numerically singular."""


class LpInfeasible(NumericalError):
    """Linear program has no feasible point."""


class LpNumericalFailure(NumericalError):
    """Linear program solver failed to terminate cleanly."""
