# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: Gaussian kernel matrices and voxel ray crossings.

Semantics match numpy_backend exactly (same tolerances, same outputs up to
floating-point summation order).
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport ceil, exp, fabs, floor, sqrt

cnp.import_array()

DEF EPS_REL_AREA = 1e-12
DEF EPS_REL_LEN = 1e-9


def gaussian_gram(xs, double k_a, double k_b):
    cdef const double[:, ::1] x = np.ascontiguousarray(xs, dtype=np.float64)
    cdef Py_ssize_t d = x.shape[0], n = x.shape[1]
    out = np.empty((d, d), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef Py_ssize_t i, j, k
    cdef double acc, diff
    for i in range(d):
        o[i, i] = k_a
        for j in range(i + 1, d):
            acc = 0.0
            for k in range(n):
                diff = x[i, k] - x[j, k]
                acc += diff * diff
            acc = k_a * exp(-k_b * acc)
            o[i, j] = acc
            o[j, i] = acc
    return out


def gaussian_cross(queries, xs, double k_a, double k_b):
    cdef const double[:, ::1] q = np.ascontiguousarray(queries, dtype=np.float64)
    cdef const double[:, ::1] x = np.ascontiguousarray(xs, dtype=np.float64)
    cdef Py_ssize_t nq = q.shape[0], d = x.shape[0], n = x.shape[1]
    out = np.empty((nq, d), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef Py_ssize_t i, j, k
    cdef double acc, diff
    for i in range(nq):
        for j in range(d):
            acc = 0.0
            for k in range(n):
                diff = q[i, k] - x[j, k]
                acc += diff * diff
            o[i, j] = k_a * exp(-k_b * acc)
    return out


def column_crossings(vertices, triangles, double y0, double z0, double spacing,
                     Py_ssize_t ny, Py_ssize_t nz):
    cdef const double[:, ::1] v = np.ascontiguousarray(vertices, dtype=np.float64)
    cdef const int[:, ::1] t = np.ascontiguousarray(triangles, dtype=np.intc)
    cdef Py_ssize_t nt = t.shape[0], ncol = ny * nz

    lo = np.asarray(vertices, dtype=np.float64).min(axis=0)
    hi = np.asarray(vertices, dtype=np.float64).max(axis=0)
    cdef double diag = sqrt((hi[0] - lo[0]) ** 2 + (hi[1] - lo[1]) ** 2 + (hi[2] - lo[2]) ** 2)
    if diag == 0.0:
        diag = 1.0
    cdef double eps_area = EPS_REL_AREA * diag * diag
    cdef double eps_len = EPS_REL_LEN * (diag if diag > spacing else spacing)

    degenerate = np.zeros(ncol, dtype=np.uint8)
    cdef unsigned char[::1] deg = degenerate

    cdef Py_ssize_t cap = 4 * ncol + 64
    cols_arr = np.empty(cap, dtype=np.int64)
    xs_arr = np.empty(cap, dtype=np.float64)
    cdef long long[::1] cols_v = cols_arr
    cdef double[::1] xs_v = xs_arr
    cdef Py_ssize_t count = 0

    cdef Py_ssize_t it, j, k, j0, j1, k0, k1
    cdef double ax, ay, az, bx, by, bz, cx, cy, cz
    cdef double area2, s, ymin, ymax, zmin, zmax, yj, zk, w0, w1, w2

    for it in range(nt):
        ax = v[t[it, 0], 0]; ay = v[t[it, 0], 1]; az = v[t[it, 0], 2]
        bx = v[t[it, 1], 0]; by = v[t[it, 1], 1]; bz = v[t[it, 1], 2]
        cx = v[t[it, 2], 0]; cy = v[t[it, 2], 1]; cz = v[t[it, 2], 2]
        area2 = (by - ay) * (cz - az) - (bz - az) * (cy - ay)

        ymin = min3(ay, by, cy) - eps_len
        ymax = max3(ay, by, cy) + eps_len
        zmin = min3(az, bz, cz) - eps_len
        zmax = max3(az, bz, cz) + eps_len
        j0 = <Py_ssize_t>ceil((ymin - y0) / spacing - 0.5)
        j1 = <Py_ssize_t>floor((ymax - y0) / spacing - 0.5)
        k0 = <Py_ssize_t>ceil((zmin - z0) / spacing - 0.5)
        k1 = <Py_ssize_t>floor((zmax - z0) / spacing - 0.5)
        if j0 < 0:
            j0 = 0
        if j1 > ny - 1:
            j1 = ny - 1
        if k0 < 0:
            k0 = 0
        if k1 > nz - 1:
            k1 = nz - 1
        if j0 > j1 or k0 > k1:
            continue

        if fabs(area2) <= eps_area:
            for j in range(j0, j1 + 1):
                for k in range(k0, k1 + 1):
                    deg[j * nz + k] = 1
            continue

        s = 1.0 if area2 > 0 else -1.0
        for j in range(j0, j1 + 1):
            yj = y0 + (j + 0.5) * spacing
            for k in range(k0, k1 + 1):
                zk = z0 + (k + 0.5) * spacing
                w0 = s * ((cy - by) * (zk - bz) - (cz - bz) * (yj - by))
                w1 = s * ((ay - cy) * (zk - cz) - (az - cz) * (yj - cy))
                w2 = s * ((by - ay) * (zk - az) - (bz - az) * (yj - ay))
                if w0 > eps_area and w1 > eps_area and w2 > eps_area:
                    if count == cap:
                        cap *= 2
                        new_cols = np.empty(cap, dtype=np.int64)
                        new_xs = np.empty(cap, dtype=np.float64)
                        new_cols[:count] = cols_arr[:count]
                        new_xs[:count] = xs_arr[:count]
                        cols_arr = new_cols
                        xs_arr = new_xs
                        cols_v = cols_arr
                        xs_v = xs_arr
                    cols_v[count] = j * nz + k
                    xs_v[count] = (w0 * ax + w1 * bx + w2 * cx) / (s * area2)
                    count += 1
                elif w0 > -eps_area and w1 > -eps_area and w2 > -eps_area:
                    deg[j * nz + k] = 1

    return cols_arr[:count].copy(), xs_arr[:count].copy(), degenerate.astype(bool)


cdef inline double min3(double a, double b, double c):
    cdef double m = a
    if b < m:
        m = b
    if c < m:
        m = c
    return m


cdef inline double max3(double a, double b, double c):
    cdef double m = a
    if b > m:
        m = b
    if c > m:
        m = c
    return m
