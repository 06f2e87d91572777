"""Exception types shared across the package."""


class SyncertError(Exception):
    """Base class for all package errors."""


class InputError(SyncertError, ValueError):
    """Malformed or out-of-domain input (shapes, non-finite entries, bad configs)."""


class ConditionViolated(SyncertError):
    """A matrix condition required by a factorization does not hold."""


class StateError(SyncertError):
    """An operation was called on an object in the wrong state."""


class DivergenceError(SyncertError):
    """A simulation produced non-finite values."""

    def __init__(self, message, time):
        super().__init__(message)
        self.time = time
