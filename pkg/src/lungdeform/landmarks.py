"""Landmark numbering, subset selection for the two sweep experiments, and
contour-based placement of the 12 standard landmarks.

Landmark NUMBERS (1..12) follow the contour of the lobe silhouette starting
at the edge of the major fissure, so numbers 1-5 lie on the fissure side.
Experiment 1 grows the active set sequentially around the contour;
experiment 2 grows it sparsely (corners and side-midpoints first), so its
3rd and 6th prefixes are the named 3-landmark {1,3,5} and 6-landmark
{1,3,5,7,9,11} models.
"""

from dataclasses import dataclass

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .errors import DegenerateLandmarksError

ORDERINGS = ("experiment1", "experiment2")
EXPERIMENT2_NUMBERS = (1, 5, 3, 9, 7, 11, 2, 4, 6, 8, 10, 12)


@dataclass(frozen=True)
class LandmarkConfig:
    """full_indices[i] is the mesh vertex index of landmark number i+1."""

    full_indices: tuple
    active_count: int = 12
    ordering: str = "experiment1"

    def __post_init__(self):
        idx = tuple(int(i) for i in self.full_indices)
        if len(idx) != 12 or len(set(idx)) != 12:
            raise ValueError("full_indices must be 12 distinct vertex indices")
        if min(idx) < 0:
            raise ValueError("negative vertex index")
        if not 1 <= self.active_count <= 12:
            raise ValueError("active_count must be in 1..12")
        if self.ordering not in ORDERINGS:
            raise ValueError(f"ordering must be one of {ORDERINGS}")
        object.__setattr__(self, "full_indices", idx)


def select_landmarks(config):
    """Active landmark vertex indices, in experiment order."""
    if config.active_count == 0:
        raise ValueError("active_count must be positive")
    if config.ordering == "experiment1":
        numbers = range(1, config.active_count + 1)
    else:
        numbers = EXPERIMENT2_NUMBERS[: config.active_count]
    return [config.full_indices[n - 1] for n in numbers]


def _projection_basis(vertices, view_axis):
    if view_axis is None:
        centered = vertices - vertices.mean(axis=0)
        _, _, vt = np.linalg.svd(centered, full_matrices=False)
        view_axis = vt[-1]
        nz = np.nonzero(view_axis)[0]
        if len(nz) and view_axis[nz[0]] < 0:
            view_axis = -view_axis
    n = np.asarray(view_axis, dtype=np.float64)
    n = n / np.linalg.norm(n)
    ref = np.eye(3)[int(np.argmin(np.abs(n)))]
    e1 = ref - np.dot(ref, n) * n
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(n, e1)
    return n, e1, e2


def outer_contour(mesh, view_axis=None):
    """Vertex indices of the silhouette contour, as a cyclic polyline.

    The contour is the convex hull of the vertices projected along the view
    axis (by default the direction of least spatial extent, which is the
    ventral-dorsal axis for a lobe-like mesh).
    """
    v = mesh.vertices
    _, e1, e2 = _projection_basis(v, view_axis)
    p2 = np.column_stack([v @ e1, v @ e2])
    try:
        hull = ConvexHull(p2)
    except QhullError as exc:
        raise DegenerateLandmarksError(f"contour projection degenerate: {exc}") from exc
    return hull.vertices.astype(int)


def place_contour_landmarks(mesh, corner_hints, view_axis=None):
    """The 12 standard landmarks on a lobe's outer contour.

    corner_hints are three approximate corner positions in this order: the
    two ends of the major-fissure arc, then the opposite corner. Each snaps
    to the nearest contour vertex; arc-length midpoints are inserted between
    consecutive corners and then again between all consecutive landmarks.
    Numbering runs sequentially around the contour starting at the first
    corner and traversing the fissure arc first.
    """
    hints = np.asarray(corner_hints, dtype=np.float64)
    if hints.shape != (3, 3):
        raise ValueError("corner_hints must be three 3-D points")
    ring = outer_contour(mesh, view_axis)
    pts = mesh.vertices[ring]
    corner_pos = []
    for h in hints:
        corner_pos.append(int(np.argmin(np.linalg.norm(pts - h, axis=1))))
    if len(set(corner_pos)) != 3:
        raise DegenerateLandmarksError(
            f"corner hints snapped to coincident contour vertices {corner_pos}"
        )
    ia, ib, ic = corner_pos
    hull_len = len(ring)

    def forward_arc(start, stop):
        return (stop - start) % hull_len

    # Traverse from corner A so that B comes before C (the A->B arc along
    # the fissure side must not contain C).
    if forward_arc(ia, ib) < forward_arc(ia, ic):
        order = [(ia + s) % hull_len for s in range(hull_len)]
    else:
        order = [(ia - s) % hull_len for s in range(hull_len)]
    ring = ring[order]
    pts = pts[order]
    pb = order.index(ib)
    pc = order.index(ic)

    seg = np.linalg.norm(np.roll(pts, -1, axis=0) - pts, axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])  # s[i], total length s[-1]
    total = s[-1]
    if total == 0:
        raise DegenerateLandmarksError("contour has zero length")

    used = {0, pb, pc}

    def snap_arc(target):
        target %= total
        d = np.abs(s[:-1] - target)
        d = np.minimum(d, total - d)
        for cand in np.argsort(d, kind="stable"):
            if cand not in used:
                used.add(int(cand))
                return int(cand)
        raise DegenerateLandmarksError("contour too sparse for 12 landmarks")

    anchors = [0, pb, pc]
    anchor_s = [s[0], s[pb], s[pc], total]
    mids = [snap_arc((anchor_s[i] + anchor_s[i + 1]) / 2.0) for i in range(3)]
    level1 = sorted(anchors + mids, key=lambda i: s[i])
    level1_s = [s[i] for i in level1] + [total]
    quarters = [snap_arc((level1_s[i] + level1_s[i + 1]) / 2.0) for i in range(6)]

    all_pos = sorted(anchors + mids + quarters, key=lambda i: s[i])
    if len(set(all_pos)) != 12:
        raise DegenerateLandmarksError("landmark placement produced duplicates")
    return LandmarkConfig(full_indices=tuple(int(ring[i]) for i in all_pos))
