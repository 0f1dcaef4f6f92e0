"""Exception hierarchy shared across the package."""


class FusionError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(FusionError):
    """Operand shapes are incompatible."""


class DomainError(FusionError):
    """Mathematically undefined input (division by zero, empty reduction, ...)."""


class ContractError(FusionError):
    """An API contract was violated (non-scalar backward, double backward, ...)."""


class EmptyClassRegion(FusionError):
    """A semantic class has no pixels in the mask."""


class DataError(FusionError):
    """Malformed file or dataset (PGM parse, checkpoint layout, missing files)."""


class ConfigError(FusionError):
    """Invalid configuration value."""


class NumericAbort(FusionError):
    """A non-finite value appeared where training cannot continue."""
