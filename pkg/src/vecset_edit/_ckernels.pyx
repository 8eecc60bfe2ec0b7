# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels. Mirrors ``_fallback`` function-for-function."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, floor, ceil, fabs, INFINITY, NAN

cnp.import_array()

BACKEND = "cython"


def farthest_point_sampling(points, Py_ssize_t k, Py_ssize_t start):
    cdef const double[:, ::1] pts = np.ascontiguousarray(points, dtype=np.float64)
    cdef Py_ssize_t n = pts.shape[0]
    cdef cnp.ndarray[cnp.int64_t, ndim=1] out_arr = np.empty(k, dtype=np.int64)
    cdef cnp.int64_t[::1] out = out_arr
    cdef double[::1] mind = np.full(n, INFINITY)
    cdef Py_ssize_t s, i, cur = start, best
    cdef double cx, cy, cz, dx, dy, dz, d, bestd
    with nogil:
        for s in range(k):
            out[s] = cur
            cx = pts[cur, 0]
            cy = pts[cur, 1]
            cz = pts[cur, 2]
            best = 0
            bestd = -1.0
            for i in range(n):
                dx = pts[i, 0] - cx
                dy = pts[i, 1] - cy
                dz = pts[i, 2] - cz
                d = dx * dx + dy * dy + dz * dz
                if d < mind[i]:
                    mind[i] = d
                if mind[i] > bestd:
                    bestd = mind[i]
                    best = i
            cur = best
    return out_arr


def blend_sdf(queries, anchors, normals, double cutoff, double tau):
    cdef const double[:, ::1] q = np.ascontiguousarray(queries, dtype=np.float64)
    cdef const double[:, ::1] p = np.ascontiguousarray(anchors, dtype=np.float64)
    cdef const double[:, ::1] nrm = np.ascontiguousarray(normals, dtype=np.float64)
    cdef Py_ssize_t m = q.shape[0], n = p.shape[0]
    out_arr = np.full(m, np.nan)
    if m == 0 or n == 0:
        return out_arr
    cdef double[::1] out = out_arr

    # uniform cell grid with cell edge >= cutoff: every anchor within cutoff of a
    # query sits in the 27 cells around it
    lo = np.asarray(p).min(axis=0)
    hi = np.asarray(p).max(axis=0)
    cdef double h = max(cutoff, float((hi - lo).max()) / 256.0, 1e-9)
    dims_np = (np.floor((hi - lo) / h).astype(np.int64) + 1)
    cdef Py_ssize_t nx = dims_np[0], ny = dims_np[1], nz = dims_np[2]
    cdef double ox = lo[0], oy = lo[1], oz = lo[2]
    cell_np = np.floor((np.asarray(p) - lo) / h).astype(np.int64)
    cell_np = np.minimum(cell_np, dims_np - 1)
    flat_np = (cell_np[:, 0] * ny + cell_np[:, 1]) * nz + cell_np[:, 2]
    order_np = np.argsort(flat_np, kind="stable").astype(np.int64)
    starts_np = np.searchsorted(flat_np[order_np], np.arange(nx * ny * nz + 1)).astype(np.int64)
    cdef cnp.int64_t[::1] order = order_np
    cdef cnp.int64_t[::1] starts = starts_np

    cdef Py_ssize_t i, a, b, c, ia, ib, ic, cell, j, t
    cdef Py_ssize_t a0, a1, b0, b1, c0, c1
    cdef double qx, qy, qz, dx, dy, dz, d2, dmin, w, num, den, c2 = cutoff * cutoff
    with nogil:
        for i in range(m):
            qx = q[i, 0]
            qy = q[i, 1]
            qz = q[i, 2]
            ia = <Py_ssize_t>floor((qx - ox) / h)
            ib = <Py_ssize_t>floor((qy - oy) / h)
            ic = <Py_ssize_t>floor((qz - oz) / h)
            a0 = ia - 1 if ia - 1 > 0 else 0
            a1 = ia + 1 if ia + 1 < nx - 1 else nx - 1
            b0 = ib - 1 if ib - 1 > 0 else 0
            b1 = ib + 1 if ib + 1 < ny - 1 else ny - 1
            c0 = ic - 1 if ic - 1 > 0 else 0
            c1 = ic + 1 if ic + 1 < nz - 1 else nz - 1
            dmin = INFINITY
            for a in range(a0, a1 + 1):
                for b in range(b0, b1 + 1):
                    for c in range(c0, c1 + 1):
                        cell = (a * ny + b) * nz + c
                        for t in range(starts[cell], starts[cell + 1]):
                            j = order[t]
                            dx = qx - p[j, 0]
                            dy = qy - p[j, 1]
                            dz = qz - p[j, 2]
                            d2 = dx * dx + dy * dy + dz * dz
                            if d2 <= c2 and d2 < dmin:
                                dmin = d2
            if dmin == INFINITY:
                continue
            num = 0.0
            den = 0.0
            for a in range(a0, a1 + 1):
                for b in range(b0, b1 + 1):
                    for c in range(c0, c1 + 1):
                        cell = (a * ny + b) * nz + c
                        for t in range(starts[cell], starts[cell + 1]):
                            j = order[t]
                            dx = qx - p[j, 0]
                            dy = qy - p[j, 1]
                            dz = qz - p[j, 2]
                            d2 = dx * dx + dy * dy + dz * dz
                            if d2 <= c2:
                                w = exp(-(d2 - dmin) / tau)
                                num += w * (dx * nrm[j, 0] + dy * nrm[j, 1] + dz * nrm[j, 2])
                                den += w
            out[i] = num / den
    return out_arr


def rasterize(xy, depth, Py_ssize_t width, Py_ssize_t height):
    cdef const double[:, :, ::1] v = np.ascontiguousarray(xy, dtype=np.float64)
    cdef const double[:, ::1] dep = np.ascontiguousarray(depth, dtype=np.float64)
    zbuf_arr = np.full((height, width), -np.inf)
    fid_arr = np.full((height, width), -1, dtype=np.int64)
    bary_arr = np.zeros((height, width, 3))
    cdef double[:, ::1] zbuf = zbuf_arr
    cdef cnp.int64_t[:, ::1] fid = fid_arr
    cdef double[:, :, ::1] bary = bary_arr
    cdef Py_ssize_t nf = v.shape[0], f, r, c, rmin, rmax, cmin, cmax
    cdef double x0, y0, x1, y1, x2, y2, area, px, py, w0, w1, w2, z
    with nogil:
        for f in range(nf):
            x0 = v[f, 0, 0]
            y0 = v[f, 0, 1]
            x1 = v[f, 1, 0]
            y1 = v[f, 1, 1]
            x2 = v[f, 2, 0]
            y2 = v[f, 2, 1]
            area = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
            if fabs(area) <= 1e-12:
                continue
            cmin = <Py_ssize_t>ceil(min(min(x0, x1), x2) - 0.5)
            cmax = <Py_ssize_t>floor(max(max(x0, x1), x2) - 0.5)
            rmin = <Py_ssize_t>ceil(min(min(y0, y1), y2) - 0.5)
            rmax = <Py_ssize_t>floor(max(max(y0, y1), y2) - 0.5)
            if cmin < 0:
                cmin = 0
            if rmin < 0:
                rmin = 0
            if cmax > width - 1:
                cmax = width - 1
            if rmax > height - 1:
                rmax = height - 1
            for r in range(rmin, rmax + 1):
                py = r + 0.5
                for c in range(cmin, cmax + 1):
                    px = c + 0.5
                    w0 = ((x1 - px) * (y2 - py) - (x2 - px) * (y1 - py)) / area
                    w1 = ((x2 - px) * (y0 - py) - (x0 - px) * (y2 - py)) / area
                    w2 = ((x0 - px) * (y1 - py) - (x1 - px) * (y0 - py)) / area
                    if w0 < 0 or w1 < 0 or w2 < 0:
                        continue
                    z = w0 * dep[f, 0] + w1 * dep[f, 1] + w2 * dep[f, 2]
                    if z > zbuf[r, c]:
                        zbuf[r, c] = z
                        fid[r, c] = f
                        bary[r, c, 0] = w0
                        bary[r, c, 1] = w1
                        bary[r, c, 2] = w2
    return zbuf_arr, fid_arr, bary_arr
