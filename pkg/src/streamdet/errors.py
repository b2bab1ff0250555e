"""Exception types shared across the package."""


class StreamDetError(Exception):
    """Base class for all package errors."""


class InvalidInputError(StreamDetError, ValueError):
    """An argument violates an operation's precondition."""


class ContractViolation(StreamDetError, RuntimeError):
    """A sequential component was driven out of order."""


class PlacementError(StreamDetError, RuntimeError):
    """Scene generation could not place an object."""


class UndefinedMetricError(StreamDetError, ValueError):
    """A metric is undefined for the given inputs (e.g. no ground truth)."""
