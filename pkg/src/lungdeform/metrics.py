"""Evaluation measures for estimated versus ground-truth deflated meshes:
per-vertex RMSE, symmetric Hausdorff distance over vertex sets, and the
volumetric Dice similarity coefficient on a shared voxel grid."""

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .mesh import occupancy_on_grid

METHOD_NAMES = ("kernel", "affine", "tps")


@dataclass(frozen=True)
class EvaluationReport:
    rmse_mm: float
    dsc: float
    hausdorff_mm: float
    per_vertex_error_mm: np.ndarray = field(repr=False)
    method: str = "kernel"
    landmark_count: int = 0
    case_id: str = ""

    def __post_init__(self):
        if self.method not in METHOD_NAMES:
            raise ValueError(f"method must be one of {METHOD_NAMES}")
        if not (self.rmse_mm >= 0 and 0 <= self.dsc <= 1 and self.hausdorff_mm >= 0):
            raise ValueError("metric values out of range")


def rmse(predicted, truth, landmark_indices=None):
    """Root mean squared per-vertex positional error.

    Returns (rmse, per_vertex_error) where the error vector covers every
    vertex. Landmark vertices, whose deflated positions are observed rather
    than estimated, are excluded from the mean when their indices are given.
    """
    if predicted.vertex_count != truth.vertex_count or not np.array_equal(
        predicted.triangles, truth.triangles
    ):
        raise ValueError("meshes must share topology for per-vertex RMSE")
    err = np.linalg.norm(predicted.vertices - truth.vertices, axis=1)
    if landmark_indices is not None and len(landmark_indices):
        mask = np.ones(len(err), dtype=bool)
        mask[np.asarray(landmark_indices, dtype=int)] = False
        if not mask.any():
            raise ValueError("landmark set covers every vertex")
        value = float(np.sqrt(np.mean(err[mask] ** 2)))
    else:
        value = float(np.sqrt(np.mean(err**2)))
    return value, err


def hausdorff(a, b):
    """Symmetric Hausdorff distance between the vertex sets of two meshes."""
    pa, pb = a.vertices, b.vertices
    if len(pa) == 0 or len(pb) == 0:
        raise ValueError("hausdorff of empty vertex set")
    d = cdist(pa, pb)
    return float(max(d.min(axis=1).max(), d.min(axis=0).max()))


def default_dsc_spacing(a, b, fraction=1.0 / 200.0):
    """Shared-grid spacing: union bounding-box diagonal times `fraction`."""
    lo = np.minimum(a.vertices.min(axis=0), b.vertices.min(axis=0))
    hi = np.maximum(a.vertices.max(axis=0), b.vertices.max(axis=0))
    return float(np.linalg.norm(hi - lo) * fraction)


def dsc(a, b, spacing):
    """Volumetric Dice coefficient 2|A&B| / (|A|+|B|).

    Both meshes are rasterized on one grid covering the union bounding box
    (padded by one voxel) so that identical meshes score exactly 1.
    """
    if spacing <= 0:
        raise ValueError("spacing must be positive")
    lo = np.minimum(a.vertices.min(axis=0), b.vertices.min(axis=0))
    hi = np.maximum(a.vertices.max(axis=0), b.vertices.max(axis=0))
    origin = lo - spacing
    dims = tuple(int(np.ceil((hi[d] - lo[d]) / spacing)) + 2 for d in range(3))
    occ_a = occupancy_on_grid(a, origin, spacing, dims)
    occ_b = occupancy_on_grid(b, origin, spacing, dims)
    na = int(occ_a.sum())
    nb = int(occ_b.sum())
    if na + nb == 0:
        return 0.0
    overlap = int((occ_a & occ_b).sum())
    return 2.0 * overlap / (na + nb)
