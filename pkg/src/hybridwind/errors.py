"""Exception hierarchy shared across the package."""


class HybridWindError(Exception):
    """Base class for all package errors."""


class SchemaError(HybridWindError):
    """A declared column or channel is missing."""


class AlignmentError(HybridWindError):
    """Timestamps are not strictly increasing at a one-hour cadence."""


class DataQualityError(HybridWindError):
    """Input data has too many or too long gaps."""


class SizeError(HybridWindError, ValueError):
    """A series is too short (or empty) for the requested operation."""


class UndefinedMetricError(HybridWindError, ArithmeticError):
    """A metric's denominator vanishes for the given inputs."""


class ContractError(HybridWindError, ValueError):
    """A documented precondition was violated."""


class DomainError(ContractError):
    """An argument lies outside its mathematical domain."""


class NumericError(HybridWindError, FloatingPointError):
    """A non-finite value appeared in a computation."""


class ConfigError(HybridWindError, ValueError):
    """Invalid configuration value, unknown key, or catalog miss."""


class DependencyError(HybridWindError, FileNotFoundError):
    """An upstream artifact required by a command is missing."""
