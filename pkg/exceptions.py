"""
Custom exceptions for the space-time Ising parity engine.
Provides specific error types so the CLI can map failures to exit codes.
"""

class SpaceTimeIsingError(Exception):
    """Base exception for space-time Ising engine errors."""
    pass


class ConfigurationError(SpaceTimeIsingError):
    """Raised when configuration is invalid or missing."""
    pass


class ParameterError(SpaceTimeIsingError):
    """Raised when a model or estimator parameter is out of its domain."""
    pass


class ConsistencyError(SpaceTimeIsingError):
    """Raised when a point, event or path does not lie inside its region."""
    pass


class PreconditionError(SpaceTimeIsingError):
    """Raised when an operation is called on an input it does not accept."""
    pass


class InvariantViolation(SpaceTimeIsingError):
    """Raised when an internal structural invariant is broken."""
    pass


class CapabilityError(SpaceTimeIsingError):
    """Raised when an instance is too large for an exact or nested computation."""
    pass


class InsufficientDataError(SpaceTimeIsingError):
    """Raised when there is not enough data to form an estimate."""
    pass


class CheckpointError(SpaceTimeIsingError):
    """Raised when checkpoint files cannot be read or written."""
    pass
