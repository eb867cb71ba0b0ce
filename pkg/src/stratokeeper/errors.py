"""Exception types raised across the package."""


class StratoError(Exception):
    """Base class for every error raised by stratokeeper."""


class AltitudeRangeError(StratoError, ValueError):
    def __init__(self, altitude, bound, limit):
        self.altitude = altitude
        self.bound = bound
        self.limit = limit
        op = "<" if bound == "lower" else ">"
        super().__init__(
            f"altitude {altitude!r} m violates the {bound} bound "
            f"({altitude!r} {op} {limit!r} m)"
        )


class DomainError(StratoError, ValueError):
    pass


class GridBoundsError(StratoError, ValueError):
    def __init__(self, axis, value, lo, hi):
        self.axis = axis
        self.value = value
        super().__init__(f"{axis}={value!r} outside grid range [{lo!r}, {hi!r}]")


class ParseError(StratoError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ConstraintError(StratoError, ValueError):
    pass


class UsageError(StratoError, RuntimeError):
    pass


class NumericError(StratoError, ArithmeticError):
    pass


class ConfigError(StratoError, ValueError):
    pass
