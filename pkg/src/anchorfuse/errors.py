"""Exception types raised across the package."""


class GridError(ValueError):
    """Base class for invalid raster inputs."""


class DimensionError(GridError):
    """Raised when a raster is too small or shapes do not agree."""


class NumericalError(ArithmeticError):
    """Raised when an iterative solve produces non-finite values."""


class DomainError(ValueError):
    """Raised when a point lies on or outside the Poincare ball."""


class RasterFormatError(ValueError):
    """Raised when a raster file cannot be decoded."""
