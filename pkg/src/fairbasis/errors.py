"""Exception hierarchy.

Every error carries an ``exit_code`` so the command line can map failures to
the documented codes: 2 for configuration problems, 3 for bad data and 4 for
numerical failures.
"""


class FairbasisError(Exception):
    exit_code = 1


class ConfigError(FairbasisError):
    exit_code = 2


class DataError(FairbasisError):
    exit_code = 3


class NumericError(FairbasisError):
    exit_code = 4


class DomainError(NumericError, ValueError):
    """Argument outside the mathematical domain of a function."""


class NotPositiveDefinite(NumericError):
    pass


class DegenerateVariance(NumericError):
    def __init__(self, name="column"):
        super().__init__(f"{name} has zero variance")
        self.name = name


class RankDeficient(NumericError):
    pass


class SingularInformation(NumericError):
    pass


class DegenerateExposure(NumericError):
    pass


class InsufficientData(NumericError):
    pass


class InvalidCholeskyRow(ConfigError):
    def __init__(self, row, sum_sq):
        super().__init__(
            f"Cholesky row {row}: sum of squared strict-lower entries is "
            f"{sum_sq:.6g}, must be < 1"
        )
        self.row = row


class InvalidCorrelation(ConfigError):
    def __init__(self, i, j, value):
        super().__init__(f"correlation ({i}, {j}) = {value:.6g} outside [-1, 1]")
        self.i, self.j = i, j


class UnsupportedPair(ConfigError):
    pass


class SchemaError(ConfigError):
    pass


class FormatError(DataError):
    def __init__(self, message, row=None):
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
        self.row = row


class CannotImpute(DataError):
    def __init__(self, name):
        super().__init__(f"column {name!r} has no observed values to impute from")
        self.name = name


class ShapeError(DataError, ValueError):
    pass


class InternalConsistency(DataError):
    pass
