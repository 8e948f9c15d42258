"""Comparison methods: landmark-fit affine transform and thin-plate spline.

Both fit a map from source landmarks to destination landmarks and then warp
every mesh vertex. Degenerate landmark configurations (fewer than four
points, or coplanar/coincident points) raise a typed error instead of
returning meaningless output.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateConfigurationError


@dataclass(frozen=True)
class AffineTransform:
    linear: np.ndarray       # 3x3
    translation: np.ndarray  # 3


@dataclass(frozen=True)
class TpsWarp:
    """3-D thin-plate spline with the biharmonic kernel U(r) = r."""

    control_points: np.ndarray     # l x 3 source landmarks
    nonlinear_weights: np.ndarray  # l x 3
    affine_part: np.ndarray        # 4 x 3, rows act on [1, x, y, z]
    regularization: float = 0.0


def _as_points(arr, name):
    p = np.asarray(arr, dtype=np.float64)
    if p.ndim != 2 or p.shape[1] != 3:
        raise ValueError(f"{name} must be (l, 3), got {p.shape}")
    return p


def fit_affine(src, dst):
    """Least-squares affine map A*src + t ~= dst.

    Requires at least four source points spanning 3-D; coplanar or collinear
    configurations (which includes every 3-landmark setup) raise
    DegenerateConfigurationError carrying the achieved rank.
    """
    src = _as_points(src, "src")
    dst = _as_points(dst, "dst")
    if src.shape != dst.shape:
        raise ValueError("src and dst must have matching shapes")
    h = np.hstack([src, np.ones((len(src), 1))])
    rank = int(np.linalg.matrix_rank(h))
    if rank < 4:
        raise DegenerateConfigurationError(
            f"affine fit needs 4 non-coplanar landmarks; configuration has "
            f"rank {rank} of 4",
            rank=rank,
        )
    coef, _, _, _ = np.linalg.lstsq(h, dst, rcond=None)
    return AffineTransform(linear=coef[:3].T.copy(), translation=coef[3].copy())


def apply_affine(transform, mesh):
    """Map every vertex through A*v + t; topology unchanged."""
    v = mesh.vertices @ transform.linear.T + transform.translation
    return mesh.with_vertices(v)


def fit_tps(src, dst, regularization=0.0):
    """Interpolating (or regularized) thin-plate spline through landmark
    correspondences.

    Solves [[Phi + reg*E, P], [P^T, 0]] [w; a] = [dst; 0] with
    Phi_jk = ||src_j - src_k|| and P = [1 | src]. With regularization 0 the
    warp maps every control point exactly to its destination.
    """
    src = _as_points(src, "src")
    dst = _as_points(dst, "dst")
    if src.shape != dst.shape:
        raise ValueError("src and dst must have matching shapes")
    if regularization < 0:
        raise ValueError("regularization must be nonnegative")
    l = len(src)
    p = np.hstack([np.ones((l, 1)), src])
    rank = int(np.linalg.matrix_rank(p))
    if rank < 4:
        raise DegenerateConfigurationError(
            f"thin-plate spline needs 4 non-coplanar landmarks; configuration "
            f"has rank {rank} of 4",
            rank=rank,
        )
    d2 = np.sum((src[:, None, :] - src[None, :, :]) ** 2, axis=2)
    offdiag = d2[np.triu_indices(l, 1)]
    if offdiag.size and offdiag.min() == 0.0:
        raise DegenerateConfigurationError("coincident control points")
    phi = np.sqrt(d2)
    system = np.zeros((l + 4, l + 4))
    system[:l, :l] = phi + regularization * np.eye(l)
    system[:l, l:] = p
    system[l:, :l] = p.T
    rhs = np.zeros((l + 4, 3))
    rhs[:l] = dst
    try:
        sol = np.linalg.solve(system, rhs)
    except np.linalg.LinAlgError as exc:
        raise DegenerateConfigurationError(f"singular TPS system: {exc}") from exc
    return TpsWarp(
        control_points=src.copy(),
        nonlinear_weights=sol[:l].copy(),
        affine_part=sol[l:].copy(),
        regularization=float(regularization),
    )


def tps_map_points(warp, points):
    """Apply the warp to an (n, 3) array of points."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    r = np.linalg.norm(pts[:, None, :] - warp.control_points[None, :, :], axis=2)
    affine = np.hstack([np.ones((len(pts), 1)), pts]) @ warp.affine_part
    return affine + r @ warp.nonlinear_weights


def apply_tps(warp, mesh):
    """Warp every mesh vertex; topology unchanged."""
    return mesh.with_vertices(tps_map_points(warp, mesh.vertices))
