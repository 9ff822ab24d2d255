"""Exception hierarchy shared by the library and the command line."""


class DynMatchError(Exception):
    pass


class InvalidInputError(DynMatchError, ValueError):
    """Non-finite, empty or malformed input data."""


class DegenerateInputError(InvalidInputError):
    """A sequence with zero spread where normalization is required."""


class ConfigError(DynMatchError, ValueError):
    pass


class RangeError(DynMatchError, IndexError):
    pass


class StateError(DynMatchError, RuntimeError):
    """Internal consistency violation (e.g. trimming past live data)."""


class TraceExhaustedError(DynMatchError, LookupError):
    pass
