"""Exception types shared across the pipeline."""


class EvImpactError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(EvImpactError, ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class BoundsError(ParseError):
    """Event coordinate outside the declared sensor geometry."""


class FormatError(EvImpactError, ValueError):
    """Binary container is malformed (magic, truncation, value range)."""


class ConfigError(EvImpactError, ValueError):
    """A configuration field violates its invariant."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class DegenerateSceneError(EvImpactError):
    pass


class NoMeasurableFramesError(EvImpactError):
    pass


class NoImpactDetectedError(EvImpactError):
    pass


class ShapeError(EvImpactError, ValueError):
    """Array arguments have incompatible dimensions."""
