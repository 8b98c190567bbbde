"""Exception taxonomy shared across the package."""


class BilisegError(Exception):
    """Base class for all toolkit errors."""


class GeometryError(BilisegError):
    """Two grids that must share geometry (dims, spacing) do not, or a grid is malformed."""


class BoundsError(GeometryError):
    """A voxel index lies outside the grid."""


class DegenerateInputError(BilisegError):
    """Input is structurally valid but the operation is undefined on it
    (empty mask, constant volume, zero within-group variance, ...)."""


class FormatError(BilisegError):
    """A file does not conform to the expected on-disk format."""


class ConfigError(BilisegError):
    """A configuration value violates its contract."""
