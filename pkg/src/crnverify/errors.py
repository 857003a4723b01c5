"""Exception types shared across the package."""


class CrnVerifyError(Exception):
    """Base class for all package-specific errors."""


class ParseError(CrnVerifyError):
    """Malformed model, property, or data text. Carries source position."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        if line is not None:
            message = f"line {line}, column {column}: {message}"
        super().__init__(message)


class ConfigError(CrnVerifyError):
    """Invalid or inconsistent configuration (bad values, unknown names)."""


class StateSpaceCapError(CrnVerifyError):
    """State-space enumeration exceeded its configured cap."""


class ToleranceUnmetError(CrnVerifyError):
    """Region refinement stopped before reaching the undecided-volume tolerance."""
