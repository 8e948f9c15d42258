"""Triangle mesh representation, ASCII PLY persistence, and volumetric
primitives (signed volume, centroid, voxel occupancy).

All coordinates are millimeters. Vertex order is significant everywhere:
it is the correspondence key between the inflated and deflated states.
"""

from dataclasses import dataclass, field

import numpy as np

from ._kernels import column_crossings
from .errors import (
    GeometryError,
    PlyFormatError,
    ResolutionError,
    UnsupportedFaceError,
)

LOBE_LABELS = ("upper", "lower")

# Fixed alternate ray directions for degenerate hits in the point-in-mesh
# test (unnormalized; only the direction matters).
_FALLBACK_DIRS = np.array(
    [
        [1.0, 0.037, 0.071],
        [1.0, -0.053, 0.023],
        [0.83, 0.41, -0.19],
    ]
)


@dataclass(frozen=True)
class Mesh:
    """Triangulated surface with fixed topology.

    vertices: (V, 3) float64, mm. triangles: (F, 3) integer vertex indices.
    Instances are immutable (arrays are locked) and safe to share across
    threads.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    lobe_label: str = "upper"

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=np.float64)
        t = np.ascontiguousarray(self.triangles, dtype=np.int32)
        if v.ndim != 2 or v.shape[1] != 3:
            raise ValueError(f"vertices must be (V, 3), got {v.shape}")
        if t.ndim != 2 or t.shape[1] != 3:
            raise ValueError(f"triangles must be (F, 3), got {t.shape}")
        if t.size and (t.min() < 0 or t.max() >= len(v)):
            raise ValueError("triangle index out of range")
        if self.lobe_label not in LOBE_LABELS:
            raise ValueError(f"lobe_label must be one of {LOBE_LABELS}")
        v.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)
        object.__setattr__(self, "_closed_checked", None)

    @property
    def vertex_count(self):
        return len(self.vertices)

    def with_vertices(self, vertices, lobe_label=None):
        """Same topology, new vertex positions."""
        return Mesh(
            np.array(vertices, dtype=np.float64),
            self.triangles.copy(),
            self.lobe_label if lobe_label is None else lobe_label,
        )

    def bounding_box(self):
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def is_closed_manifold(self):
        """True iff every edge is shared by exactly two triangles with
        opposite orientation (closed, consistently oriented 2-manifold)."""
        cached = object.__getattribute__(self, "_closed_checked")
        if cached is None:
            cached = _closed_manifold(self.triangles, self.vertex_count)
            object.__setattr__(self, "_closed_checked", cached)
        return cached


@dataclass(frozen=True)
class VoxelGrid:
    """Axis-aligned occupancy grid. occupancy is flat, C order over dims."""

    origin: np.ndarray
    spacing: float
    dims: tuple
    occupancy: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.spacing <= 0:
            raise ValueError("spacing must be positive")
        if len(self.occupancy) != int(np.prod(self.dims)):
            raise ValueError("occupancy length must equal product of dims")

    def as_array(self):
        return self.occupancy.reshape(self.dims)

    @property
    def occupied_count(self):
        return int(self.occupancy.sum())

    def volume_estimate(self):
        return self.occupied_count * self.spacing**3


def _closed_manifold(triangles, n_vertices):
    if len(triangles) == 0:
        return False
    t = triangles.astype(np.int64)
    if (t[:, 0] == t[:, 1]).any() or (t[:, 1] == t[:, 2]).any() or (t[:, 2] == t[:, 0]).any():
        return False
    edges = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
    key = edges[:, 0] * n_vertices + edges[:, 1]
    rev = edges[:, 1] * n_vertices + edges[:, 0]
    uniq, counts = np.unique(key, return_counts=True)
    if (counts != 1).any():
        return False
    return np.array_equal(uniq, np.sort(rev))


def _require_closed(mesh, what):
    if not mesh.is_closed_manifold():
        raise GeometryError(
            f"{what} requires a closed, consistently oriented manifold mesh"
        )


def centroid(points):
    """Arithmetic mean of a nonempty list of 3-D points."""
    p = np.asarray(points, dtype=np.float64)
    if p.size == 0:
        raise ValueError("centroid of empty point set")
    return p.reshape(-1, 3).mean(axis=0)


def mesh_volume(mesh):
    """Enclosed volume in mm^3 (absolute value of the signed tetrahedron sum)."""
    _require_closed(mesh, "mesh_volume")
    a = mesh.vertices[mesh.triangles[:, 0]]
    b = mesh.vertices[mesh.triangles[:, 1]]
    c = mesh.vertices[mesh.triangles[:, 2]]
    signed = np.einsum("ij,ij->i", a, np.cross(b, c)).sum() / 6.0
    return float(abs(signed))


# ---------------------------------------------------------------------------
# PLY I/O (ASCII only)


def load_ply(path):
    """Read an ASCII PLY triangle mesh, preserving vertex and face order."""
    with open(path, "r", encoding="ascii", errors="replace") as fh:
        lines = fh.read().splitlines()

    n_vertex = n_face = None
    vertex_props = []
    in_vertex_element = False
    fmt_seen = False
    body_start = None

    if not lines or lines[0].strip() != "ply":
        raise PlyFormatError("missing 'ply' magic", line=1)
    for i, raw in enumerate(lines[1:], start=2):
        tok = raw.split()
        if not tok or tok[0] == "comment":
            continue
        if tok[0] == "format":
            if len(tok) < 2 or tok[1] != "ascii":
                raise PlyFormatError(f"unsupported format {raw!r} (ASCII only)", line=i)
            fmt_seen = True
        elif tok[0] == "element":
            if tok[1] == "vertex":
                n_vertex = int(tok[2])
                in_vertex_element = True
            elif tok[1] == "face":
                n_face = int(tok[2])
                in_vertex_element = False
            else:
                raise PlyFormatError(f"unsupported element {tok[1]!r}", line=i)
        elif tok[0] == "property":
            if in_vertex_element and tok[1] != "list":
                vertex_props.append(tok[-1])
        elif tok[0] == "end_header":
            body_start = i
            break
        else:
            raise PlyFormatError(f"unexpected header line {raw!r}", line=i)
    if body_start is None:
        raise PlyFormatError("missing end_header")
    if not fmt_seen:
        raise PlyFormatError("missing format line")
    if n_vertex is None or n_face is None:
        raise PlyFormatError("missing vertex or face element")
    for axis in ("x", "y", "z"):
        if axis not in vertex_props:
            raise PlyFormatError(f"vertex element lacks property {axis!r}")
    ix, iy, iz = (vertex_props.index(a) for a in ("x", "y", "z"))

    body = lines[body_start:]
    if len(body) < n_vertex + n_face:
        raise PlyFormatError(
            f"body has {len(body)} lines, expected {n_vertex + n_face}",
            line=body_start + len(body) + 1,
        )
    vertices = np.empty((n_vertex, 3), dtype=np.float64)
    for r in range(n_vertex):
        tok = body[r].split()
        try:
            vertices[r, 0] = float(tok[ix])
            vertices[r, 1] = float(tok[iy])
            vertices[r, 2] = float(tok[iz])
        except (ValueError, IndexError) as exc:
            raise PlyFormatError(f"bad vertex line: {exc}", line=body_start + r + 1)
    triangles = np.empty((n_face, 3), dtype=np.int32)
    for r in range(n_face):
        lineno = body_start + n_vertex + r + 1
        tok = body[n_vertex + r].split()
        try:
            count = int(tok[0])
        except (ValueError, IndexError) as exc:
            raise PlyFormatError(f"bad face line: {exc}", line=lineno)
        if count != 3:
            raise UnsupportedFaceError(
                f"face with {count} vertices (triangles only)", line=lineno
            )
        try:
            triangles[r] = [int(tok[1]), int(tok[2]), int(tok[3])]
        except (ValueError, IndexError) as exc:
            raise PlyFormatError(f"bad face line: {exc}", line=lineno)
    return Mesh(vertices, triangles)


def save_ply(mesh, path, vertex_scalars=None):
    """Write an ASCII PLY. Coordinates use shortest round-trip decimals so a
    save/load cycle is bit-exact.

    vertex_scalars, if given, must be per-vertex values in [0, 1] and are
    emitted as colors fading from white (0) to saturated blue (1).
    """
    colors = None
    if vertex_scalars is not None:
        s = np.asarray(vertex_scalars, dtype=np.float64)
        if s.shape != (mesh.vertex_count,):
            raise ValueError("vertex_scalars length must equal vertex count")
        if (s < 0).any() or (s > 1).any():
            raise ValueError("vertex_scalars must lie in [0, 1]")
        fade = np.rint(255.0 * (1.0 - s)).astype(int)
        colors = np.stack([fade, fade, np.full_like(fade, 255)], axis=1)

    out = ["ply", "format ascii 1.0"]
    out.append(f"element vertex {mesh.vertex_count}")
    out += ["property float x", "property float y", "property float z"]
    if colors is not None:
        out += ["property uchar red", "property uchar green", "property uchar blue"]
    out.append(f"element face {len(mesh.triangles)}")
    out.append("property list uchar int vertex_indices")
    out.append("end_header")
    for i, (x, y, z) in enumerate(mesh.vertices):
        line = f"{float(x)!r} {float(y)!r} {float(z)!r}"
        if colors is not None:
            line += " {} {} {}".format(*colors[i])
        out.append(line)
    for a, b, c in mesh.triangles:
        out.append(f"3 {a} {b} {c}")
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(out) + "\n")


# ---------------------------------------------------------------------------
# Voxelization


def voxelize(mesh, spacing):
    """Rasterize a closed mesh onto a voxel grid covering its bounding box
    padded by one voxel. A voxel is occupied iff its center lies inside the
    surface by ray-crossing parity."""
    _require_closed(mesh, "voxelize")
    if spacing <= 0:
        raise ValueError("spacing must be positive")
    lo, hi = mesh.bounding_box()
    origin = lo - spacing
    dims = tuple(int(np.ceil((hi[d] - lo[d]) / spacing)) + 2 for d in range(3))
    occupancy = occupancy_on_grid(mesh, origin, spacing, dims)
    return VoxelGrid(origin, float(spacing), dims, occupancy.ravel())


def occupancy_on_grid(mesh, origin, spacing, dims):
    """Occupancy of an explicit grid (shared-grid rasterization for overlap
    metrics). Returns a (nx, ny, nz) boolean array."""
    nx, ny, nz = dims
    if nx * ny * nz > 10**8:
        raise ResolutionError(
            f"grid {dims} exceeds 10^8 voxels; increase spacing"
        )
    cols, xs, degenerate = column_crossings(
        mesh.vertices, mesh.triangles, origin[1], origin[2], spacing, ny, nz
    )
    # Parity per column: a center at x_i is inside iff an odd number of
    # crossings lie strictly below it. Toggle index floor(t)+1 implements the
    # strict inequality, including exact center hits.
    toggles = np.zeros((ny * nz, nx + 1), dtype=np.int32)
    if len(cols):
        t = np.floor((xs - origin[0]) / spacing - 0.5).astype(np.int64) + 1
        np.clip(t, 0, nx, out=t)
        np.add.at(toggles, (cols, t), 1)
    occ_cols = (np.cumsum(toggles[:, :nx], axis=1) % 2).astype(bool)

    deg_idx = np.nonzero(degenerate)[0]
    if len(deg_idx):
        tri_pts = mesh.vertices[mesh.triangles]
        diag = float(np.linalg.norm(mesh.vertices.max(0) - mesh.vertices.min(0))) or 1.0
        centers_x = origin[0] + (np.arange(nx) + 0.5) * spacing
        for col in deg_idx:
            j, k = divmod(int(col), nz)
            y = origin[1] + (j + 0.5) * spacing
            z = origin[2] + (k + 0.5) * spacing
            for i in range(nx):
                occ_cols[col, i] = _point_in_mesh(
                    np.array([centers_x[i], y, z]), tri_pts, diag
                )
    # columns are indexed j*nz + k; reorder to (nx, ny, nz)
    return occ_cols.reshape(ny, nz, nx).transpose(2, 0, 1)


def _point_in_mesh(point, tri_pts, diag):
    """Ray-crossing parity with deterministic direction retries.

    Tries the fixed fallback directions in order; a cast is accepted only if
    no triangle is grazed. Points that defeat all retries sit on the surface
    within tolerance and are classified outside.
    """
    for d in _FALLBACK_DIRS:
        count, clean = _count_ray_crossings(point, d, tri_pts, diag)
        if clean:
            return count % 2 == 1
    return False


def _count_ray_crossings(origin, direction, tri_pts, diag):
    a = tri_pts[:, 0]
    e1 = tri_pts[:, 1] - a
    e2 = tri_pts[:, 2] - a
    d = direction / np.linalg.norm(direction)
    pvec = np.cross(d, e2)
    det = np.einsum("ij,ij->i", e1, pvec)
    eps_det = 1e-12 * diag * diag
    eps_b = 1e-9
    eps_t = 1e-12 * diag

    parallel = np.abs(det) <= eps_det
    safe_det = np.where(parallel, 1.0, det)
    tvec = origin[None, :] - a
    u = np.einsum("ij,ij->i", tvec, pvec) / safe_det
    qvec = np.cross(tvec, e1)
    v = (d[None, :] * qvec).sum(axis=1) / safe_det
    t = np.einsum("ij,ij->i", e2, qvec) / safe_det

    near = ~parallel & (u > -eps_b) & (v > -eps_b) & (u + v < 1 + eps_b) & (t > -eps_t)
    interior = near & (u > eps_b) & (v > eps_b) & (u + v < 1 - eps_b) & (t > eps_t)
    grazing = near & ~interior
    if parallel.any():
        # a ray lying in the plane of a parallel triangle is ambiguous
        n = np.cross(e1[parallel], e2[parallel])
        nn = np.linalg.norm(n, axis=1)
        off = np.abs(np.einsum("ij,ij->i", tvec[parallel], n))
        if ((nn > 0) & (off <= 1e-9 * diag * nn)).any():
            return 0, False
    if grazing.any():
        return 0, False
    return int(interior.sum()), True
