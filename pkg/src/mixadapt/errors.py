"""Exception hierarchy shared across the package.

Everything raised on purpose derives from :class:`MixAdaptError`, so callers
(and the service layer) can distinguish "the caller broke a contract" from a
genuine bug.
"""


class MixAdaptError(Exception):
    """Base class for all errors raised deliberately by this package."""


class ShapeError(MixAdaptError):
    """Tensor shapes are incompatible for the requested operation."""


class DataDomainError(MixAdaptError):
    """A value lies outside the mathematical domain of an operation."""


class TapeError(MixAdaptError):
    """Misuse of the gradient tape (non-scalar loss, double backward, ...)."""


class ParameterError(MixAdaptError):
    """An argument value is invalid (non-positive temperature, K < 2, ...)."""


class ContractError(MixAdaptError):
    """A documented precondition of an operation was violated by the caller."""


class DataError(MixAdaptError):
    """A dataset file or array failed validation; message carries position."""


class ConfigError(MixAdaptError):
    """A configuration file or value is invalid; message names the key."""


class CheckpointError(MixAdaptError):
    """A checkpoint file is unreadable or inconsistent."""


class CheckpointVersionError(CheckpointError):
    """The checkpoint declares a format version this build does not support."""


class ChecksumError(CheckpointError):
    """The checkpoint's trailing checksum does not match its content."""


class DivergenceError(MixAdaptError):
    """Training produced a non-finite parameter or loss."""
