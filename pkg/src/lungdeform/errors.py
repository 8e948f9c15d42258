"""Exception types shared across the package.

The CLI maps these onto exit codes: usage errors exit 2, data/geometry
errors exit 3, numerical conditioning errors exit 4.
"""


class LungDeformError(Exception):
    """Base class for all package errors."""


class PlyFormatError(LungDeformError):
    """Malformed or unsupported PLY input."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class UnsupportedFaceError(PlyFormatError):
    """PLY face with a vertex count other than 3."""


class GeometryError(LungDeformError):
    """Mesh violates a geometric precondition (for example not a closed manifold)."""


class ResolutionError(GeometryError):
    """Requested voxel grid is too large."""


class DegenerateLandmarksError(LungDeformError):
    """Landmark placement collapsed onto coincident vertices."""


class DegenerateConfigurationError(LungDeformError):
    """Point configuration too degenerate to fit a transform (coplanar or coincident)."""

    def __init__(self, message, rank=None):
        super().__init__(message)
        self.rank = rank


class ConditioningError(LungDeformError):
    """Linear system numerically singular."""


class GenerationError(LungDeformError):
    """Synthetic case generation failed to satisfy its constraints."""


class DataError(LungDeformError):
    """Input data (manifest, cohort) unusable for the requested run."""
