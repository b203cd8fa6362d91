"""Exception hierarchy shared across the package."""


class CacheRevError(Exception):
    """Base class for all errors raised by cacherev."""


class TraceIncompleteError(CacheRevError):
    pass


class InvalidPlanError(CacheRevError):
    pass


class EmptyInputError(CacheRevError):
    pass


class UndefinedMetricError(CacheRevError):
    pass


class ShapeError(CacheRevError, ValueError):
    pass


class InvalidParamsError(CacheRevError, ValueError):
    pass


class DegenerateFeatureError(CacheRevError):
    pass


class ExhaustedGenreError(CacheRevError):
    pass


class InsufficientDataError(CacheRevError):
    pass


class DivergenceError(CacheRevError, FloatingPointError):
    def __init__(self, message, tensor=None):
        super().__init__(message)
        self.tensor = tensor


class NoHistoryError(CacheRevError):
    pass


class SizeGuardError(CacheRevError):
    pass


class ConfigError(CacheRevError, ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
