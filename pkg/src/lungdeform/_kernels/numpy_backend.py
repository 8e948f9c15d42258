"""NumPy implementations of the hot kernels.

Used when the compiled extension is unavailable (or forced via the
LUNGDEFORM_PURE environment variable). Both backends implement the same
three entry points with identical semantics; the compiled one is simply
faster on the voxel rasterization path.
"""

import numpy as np

# Tolerances for the ray-crossing classifier, relative to the bounding-box
# diagonal. Edge functions are in squared-length units.
EPS_REL_AREA = 1e-12
EPS_REL_LEN = 1e-9


def gaussian_gram(xs, k_a, k_b):
    """D x D Gaussian kernel matrix k_a*exp(-k_b*||x_i - x_j||^2).

    Symmetric to exact bit equality (upper triangle mirrored) with the
    diagonal pinned to k_a.
    """
    xs = np.ascontiguousarray(xs, dtype=np.float64)
    sq = np.einsum("ij,ij->i", xs, xs)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (xs @ xs.T)
    np.maximum(d2, 0.0, out=d2)
    k = np.triu(k_a * np.exp(-k_b * d2), 1)
    k = k + k.T
    np.fill_diagonal(k, k_a)
    return k


def gaussian_cross(queries, xs, k_a, k_b):
    """Q x D cross-kernel between query vectors and training vectors."""
    q = np.ascontiguousarray(queries, dtype=np.float64)
    x = np.ascontiguousarray(xs, dtype=np.float64)
    d2 = (
        np.einsum("ij,ij->i", q, q)[:, None]
        + np.einsum("ij,ij->i", x, x)[None, :]
        - 2.0 * (q @ x.T)
    )
    np.maximum(d2, 0.0, out=d2)
    return k_a * np.exp(-k_b * d2)


def column_crossings(vertices, triangles, y0, z0, spacing, ny, nz):
    """Surface crossings of +x rays through a (ny, nz) grid of columns.

    Column (j, k) is the ray through y = y0 + (j+0.5)*spacing,
    z = z0 + (k+0.5)*spacing, parallel to +x. Returns (cols, xs, degenerate)
    where cols/xs list every strict interior crossing (flat column index
    j*nz + k and the x coordinate of the hit) and degenerate flags columns
    that graze an edge, vertex, or x-parallel triangle and therefore need
    the perturbed-ray fallback.
    """
    v = np.asarray(vertices, dtype=np.float64)
    t = np.asarray(triangles)
    diag = float(np.linalg.norm(v.max(axis=0) - v.min(axis=0))) or 1.0
    eps_area = EPS_REL_AREA * diag * diag
    eps_len = EPS_REL_LEN * max(diag, spacing)

    degenerate = np.zeros(ny * nz, dtype=bool)
    out_cols = []
    out_xs = []
    tri_pts = v[t]  # (F, 3, 3)

    for a, b, c in tri_pts:
        area2 = (b[1] - a[1]) * (c[2] - a[2]) - (b[2] - a[2]) * (c[1] - a[1])
        ymin = min(a[1], b[1], c[1]) - eps_len
        ymax = max(a[1], b[1], c[1]) + eps_len
        zmin = min(a[2], b[2], c[2]) - eps_len
        zmax = max(a[2], b[2], c[2]) + eps_len
        j0 = max(int(np.ceil((ymin - y0) / spacing - 0.5)), 0)
        j1 = min(int(np.floor((ymax - y0) / spacing - 0.5)), ny - 1)
        k0 = max(int(np.ceil((zmin - z0) / spacing - 0.5)), 0)
        k1 = min(int(np.floor((zmax - z0) / spacing - 0.5)), nz - 1)
        if j0 > j1 or k0 > k1:
            continue
        cols = np.arange(j0, j1 + 1)[:, None] * nz + np.arange(k0, k1 + 1)[None, :]
        if abs(area2) <= eps_area:
            # Projection collapses to a segment: the ray is parallel to the
            # triangle plane. Conservatively send the covered columns to the
            # fallback path.
            degenerate[cols.ravel()] = True
            continue
        ys = y0 + (np.arange(j0, j1 + 1) + 0.5) * spacing
        zs = z0 + (np.arange(k0, k1 + 1) + 0.5) * spacing
        yy = ys[:, None]
        zz = zs[None, :]
        s = 1.0 if area2 > 0 else -1.0
        w0 = s * ((c[1] - b[1]) * (zz - b[2]) - (c[2] - b[2]) * (yy - b[1]))
        w1 = s * ((a[1] - c[1]) * (zz - c[2]) - (a[2] - c[2]) * (yy - c[1]))
        w2 = s * ((b[1] - a[1]) * (zz - a[2]) - (b[2] - a[2]) * (yy - a[1]))
        inside = (w0 > eps_area) & (w1 > eps_area) & (w2 > eps_area)
        grazing = (
            (w0 > -eps_area) & (w1 > -eps_area) & (w2 > -eps_area) & ~inside
        )
        if grazing.any():
            degenerate[cols[grazing]] = True
        if inside.any():
            x = (w0 * a[0] + w1 * b[0] + w2 * c[0]) / (s * area2)
            out_cols.append(cols[inside].ravel())
            out_xs.append(x[inside].ravel())

    if out_cols:
        return (
            np.concatenate(out_cols),
            np.concatenate(out_xs),
            degenerate,
        )
    return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.float64), degenerate
