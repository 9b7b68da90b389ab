"""Exception hierarchy shared by all modules."""


class AuditError(Exception):
    """Base class for errors raised by this package."""

    exit_code = 1


class ConfigError(AuditError, ValueError):
    """Invalid parameters or flags."""

    exit_code = 2


class DataError(AuditError, ValueError):
    """Malformed or inconsistent input data."""

    exit_code = 3


class FitError(AuditError):
    """The log-linear model could not be fit."""

    exit_code = 4


class DegenerateFitError(FitError):
    """Too few uncensored points to fit a line."""


class NonDecayingFitError(FitError):
    """Fitted slope does not describe a decaying audience."""


class UnstableEstimateError(FitError):
    """Too many bootstrap replicates (or grid points) failed to fit."""
