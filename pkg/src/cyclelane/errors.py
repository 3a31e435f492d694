"""Exception hierarchy shared by every stage of the pipeline."""


class CyclelaneError(Exception):
    """Base class for all package errors."""


class ValidationError(CyclelaneError):
    """Bad user input: malformed files, invalid ranges, missing paths."""


class TaxonomyError(ValidationError):
    pass


class ParseError(ValidationError):
    pass


class ConfigError(ValidationError):
    pass


class GeometryError(CyclelaneError):
    pass


class FitError(GeometryError):
    """Raised when a line cannot be fitted (fewer than two distinct samples)."""


class MatchingError(CyclelaneError):
    pass


class ShapeError(CyclelaneError):
    pass


class DivergenceError(CyclelaneError):
    pass


class CacheError(ValidationError):
    pass


class HarnessError(CyclelaneError):
    pass
