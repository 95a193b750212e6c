"""Exception hierarchy shared by every telewatch module."""


class TelewatchError(Exception):
    """Base class for all errors raised by this package."""


class ShapeMismatch(TelewatchError, ValueError):
    pass


class MalformedRow(TelewatchError, ValueError):
    pass


class RangeViolation(TelewatchError, ValueError):
    pass


class NonMonotoneTimestamp(TelewatchError, ValueError):
    pass


class ProbeUnavailable(TelewatchError, RuntimeError):
    """No live host probe on this platform; fall back to replay or synthetic data."""


class InsufficientData(TelewatchError, ValueError):
    pass


class WrongWindowLength(TelewatchError, ValueError):
    pass


class UnknownVersion(TelewatchError, ValueError):
    pass


class CorruptBundle(TelewatchError, ValueError):
    pass


class OutOfOrderSample(TelewatchError, ValueError):
    pass


class EmptyInput(TelewatchError, ValueError):
    pass


class InvalidSpec(TelewatchError, ValueError):
    pass
