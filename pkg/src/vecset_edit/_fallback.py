"""Pure-numpy implementations of the hot kernels.

Selected by :mod:`vecset_edit.kernels` when the compiled ``_ckernels`` module is
unavailable (or when ``VSE_PURE_PYTHON=1``). Every function here has the same
signature and the same floating-point formulas as its compiled twin so the two
backends agree to rounding.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

BACKEND = "numpy"


def farthest_point_sampling(points: np.ndarray, k: int, start: int) -> np.ndarray:
    pts = np.ascontiguousarray(points, dtype=np.float64)
    n = pts.shape[0]
    x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
    out = np.empty(k, dtype=np.int64)
    mind = np.full(n, np.inf)
    cur = int(start)
    for s in range(k):
        out[s] = cur
        dx = x - x[cur]
        dy = y - y[cur]
        dz = z - z[cur]
        np.minimum(mind, dx * dx + dy * dy + dz * dz, out=mind)
        cur = int(np.argmax(mind))
    return out


def blend_sdf(
    queries: np.ndarray,
    anchors: np.ndarray,
    normals: np.ndarray,
    cutoff: float,
    tau: float,
) -> np.ndarray:
    """Blended local-plane distance; NaN where no anchor lies within ``cutoff``."""
    q = np.ascontiguousarray(queries, dtype=np.float64)
    p = np.ascontiguousarray(anchors, dtype=np.float64)
    nrm = np.ascontiguousarray(normals, dtype=np.float64)
    out = np.full(q.shape[0], np.nan)
    if q.shape[0] == 0 or p.shape[0] == 0:
        return out
    tree = cKDTree(p)
    c2 = cutoff * cutoff
    chunk = 8192
    for lo in range(0, q.shape[0], chunk):
        qc = q[lo : lo + chunk]
        k = min(32, p.shape[0])
        while True:
            _, idx = tree.query(qc, k=k, distance_upper_bound=cutoff * (1.0 + 1e-9) + 1e-12)
            idx = np.asarray(idx).reshape(qc.shape[0], k)
            full = idx[:, -1] < p.shape[0]
            if k >= p.shape[0] or not full.any():
                break
            k = min(2 * k, p.shape[0])
        valid = idx < p.shape[0]
        safe = np.where(valid, idx, 0)
        dx = qc[:, 0:1] - p[safe, 0]
        dy = qc[:, 1:2] - p[safe, 1]
        dz = qc[:, 2:3] - p[safe, 2]
        d2 = dx * dx + dy * dy + dz * dz
        valid &= d2 <= c2
        near = valid.any(axis=1)
        d2 = np.where(valid, d2, np.inf)
        dmin = d2.min(axis=1, keepdims=True)
        dmin = np.where(np.isfinite(dmin), dmin, 0.0)
        w = np.where(valid, np.exp(-(d2 - dmin) / tau), 0.0)
        plane = dx * nrm[safe, 0] + dy * nrm[safe, 1] + dz * nrm[safe, 2]
        num = (w * plane).sum(axis=1)
        den = w.sum(axis=1)
        vals = np.full(qc.shape[0], np.nan)
        vals[near] = num[near] / den[near]
        out[lo : lo + chunk] = vals
    return out


def rasterize(
    xy: np.ndarray, depth: np.ndarray, width: int, height: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Z-buffer triangles given in pixel coordinates.

    ``xy`` is (F, 3, 2) with x to the right and y downward, pixel centres at
    ``(c + 0.5, r + 0.5)``; larger ``depth`` is closer to the camera. Returns
    ``(zbuf, face_id, bary)`` with ``face_id == -1`` on background.
    """
    xy = np.ascontiguousarray(xy, dtype=np.float64)
    depth = np.ascontiguousarray(depth, dtype=np.float64)
    zbuf = np.full((height, width), -np.inf)
    fid = np.full((height, width), -1, dtype=np.int64)
    bary = np.zeros((height, width, 3))
    nf = xy.shape[0]
    if nf == 0:
        return zbuf, fid, bary
    x0, y0 = xy[:, 0, 0], xy[:, 0, 1]
    x1, y1 = xy[:, 1, 0], xy[:, 1, 1]
    x2, y2 = xy[:, 2, 0], xy[:, 2, 1]
    area = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
    cmin = np.maximum(np.ceil(np.minimum(np.minimum(x0, x1), x2) - 0.5), 0).astype(np.int64)
    cmax = np.minimum(np.floor(np.maximum(np.maximum(x0, x1), x2) - 0.5), width - 1).astype(np.int64)
    rmin = np.maximum(np.ceil(np.minimum(np.minimum(y0, y1), y2) - 0.5), 0).astype(np.int64)
    rmax = np.minimum(np.floor(np.maximum(np.maximum(y0, y1), y2) - 0.5), height - 1).astype(np.int64)
    ncol = np.maximum(cmax - cmin + 1, 0)
    nrow = np.maximum(rmax - rmin + 1, 0)
    count = np.where(np.abs(area) > 1e-12, ncol * nrow, 0)

    best_pix, best_d, best_f, best_b = [], [], [], []
    faces = np.nonzero(count)[0]
    budget = 1 << 21
    start = 0
    csum = np.cumsum(count[faces])
    while start < faces.size:
        base = csum[start - 1] if start > 0 else 0
        stop = int(np.searchsorted(csum, base + budget, side="right"))
        stop = max(stop, start + 1)
        fs = faces[start:stop]
        start = stop
        cnt = count[fs]
        f = np.repeat(fs, cnt)
        local = np.arange(f.size) - np.repeat(np.cumsum(cnt) - cnt, cnt)
        nc = ncol[f]
        c = cmin[f] + local % nc
        r = rmin[f] + local // nc
        px = c + 0.5
        py = r + 0.5
        a = area[f]
        w0 = ((x1[f] - px) * (y2[f] - py) - (x2[f] - px) * (y1[f] - py)) / a
        w1 = ((x2[f] - px) * (y0[f] - py) - (x0[f] - px) * (y2[f] - py)) / a
        w2 = ((x0[f] - px) * (y1[f] - py) - (x1[f] - px) * (y0[f] - py)) / a
        inside = (w0 >= 0) & (w1 >= 0) & (w2 >= 0)
        f, r, c = f[inside], r[inside], c[inside]
        w0, w1, w2 = w0[inside], w1[inside], w2[inside]
        z = w0 * depth[f, 0] + w1 * depth[f, 1] + w2 * depth[f, 2]
        best_pix.append(r * width + c)
        best_d.append(z)
        best_f.append(f)
        best_b.append(np.stack([w0, w1, w2], axis=1))
    if not best_pix:
        return zbuf, fid, bary
    pix = np.concatenate(best_pix)
    z = np.concatenate(best_d)
    f = np.concatenate(best_f)
    b = np.concatenate(best_b)
    order = np.lexsort((f, -z, pix))
    pix, z, f, b = pix[order], z[order], f[order], b[order]
    first = np.ones(pix.size, dtype=bool)
    first[1:] = pix[1:] != pix[:-1]
    pix, z, f, b = pix[first], z[first], f[first], b[first]
    zbuf.reshape(-1)[pix] = z
    fid.reshape(-1)[pix] = f
    bary.reshape(-1, 3)[pix] = b
    return zbuf, fid, bary
