"""Exception hierarchy shared across the package."""


class PcmError(Exception):
    """Base class for all errors raised by this package."""


class MissingCounterfactualError(PcmError):
    """A subject lacks the counterfactual outcome required by the operation."""


class InsufficientControlsError(PcmError):
    """Fewer control subjects than the regression needs."""


class OneSidedClusterError(PcmError):
    """A cluster is missing one treatment arm in control-difference mode."""


class InvalidSpecError(PcmError):
    """A synthetic-trial spec violates its invariants."""


class DatasetTooSmallError(PcmError):
    """Too few subjects for the requested operation (e.g. n < 2^d)."""


class InvalidConfigError(PcmError):
    """A fit configuration field is out of range."""


class InvalidDatasetError(PcmError):
    """A dataset failed validation required by a fitting operation."""
