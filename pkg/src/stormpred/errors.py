"""Exception types shared across the package."""


class StormPredError(Exception):
    """Base class for all errors raised by stormpred."""


class ParseError(StormPredError):
    """A file could not be read as its documented format."""


class ValidationError(StormPredError):
    """Well-formed input that violates a domain rule."""


class ModelFormatError(StormPredError):
    """A model or dataset artifact has a wrong version or broken schema."""


class NumericsError(StormPredError):
    """A numeric invariant broke at runtime (non-finite loss or gradient)."""
