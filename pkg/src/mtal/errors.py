"""Exception types shared across the toolkit."""


class MtalError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(MtalError, ValueError):
    """Invalid hyperparameter or configuration value."""


class ShapeError(MtalError, ValueError):
    """Array dimensions inconsistent with the operation's contract."""


class NumericError(MtalError, ArithmeticError):
    """Non-finite value where a finite one is required."""


class DataError(MtalError, ValueError):
    """Dataset or batch violates a precondition (empty group, imbalance, ...)."""


class ValidationError(DataError):
    """Dataset invariant violation found by data_model.validate."""


class SimulationError(MtalError, RuntimeError):
    """Synthetic-data generation failed (e.g. correlation matrix not positive definite)."""


class FormatError(MtalError, ValueError):
    """Malformed input file or incompatible archive."""
