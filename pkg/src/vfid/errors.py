"""Exception types shared across the package."""


class VfidError(Exception):
    """Base class for all package errors."""


class ValidationError(VfidError):
    """Input value violates a documented precondition."""


class ParseError(VfidError):
    """Malformed input file; message names the offending line."""


class ShapeError(VfidError):
    """Inconsistent grid/field shapes."""


class ConfigError(VfidError):
    """Invalid or incomplete run configuration."""


class NumericError(VfidError):
    """A numerical routine failed to converge; carries diagnostic detail."""

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


class SeedingError(VfidError):
    """No admissible location to seed a new basis function."""
