"""Backend selection for the hot kernels.

The compiled ``_ckernels`` extension is used when it imports; otherwise the
numpy twins in ``_fallback`` take over. ``VSE_PURE_PYTHON=1`` forces the
fallback. ``VSE_THREADS`` caps the worker threads used to fan query chunks out
(the compiled kernels release the GIL).
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import _fallback

if os.environ.get("VSE_PURE_PYTHON") == "1":
    _impl = _fallback
else:
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]
    except ImportError:  # extension not built
        _impl = _fallback

BACKEND: str = _impl.BACKEND


def n_threads() -> int:
    try:
        cap = int(os.environ.get("VSE_THREADS", "0"))
    except ValueError:
        cap = 0
    avail = os.cpu_count() or 1
    return max(1, min(cap, avail) if cap > 0 else avail)


def farthest_point_sampling(points: np.ndarray, k: int, start: int = 0, impl=None) -> np.ndarray:
    impl = impl or _impl
    n = len(points)
    if not 1 <= k <= n:
        raise ValueError(f"cannot pick {k} of {n} points")
    if not 0 <= start < n:
        raise ValueError("start index out of range")
    return impl.farthest_point_sampling(points, int(k), int(start))


def blend_sdf(queries, anchors, normals, cutoff: float, tau: float, impl=None) -> np.ndarray:
    """Blended local-plane values, NaN where nothing lies within ``cutoff``."""
    impl = impl or _impl
    queries = np.ascontiguousarray(queries, dtype=np.float64).reshape(-1, 3)
    workers = n_threads()
    if workers == 1 or len(queries) < 65536 or impl is _fallback:
        return impl.blend_sdf(queries, anchors, normals, cutoff, tau)
    chunks = np.array_split(queries, workers * 4)
    with ThreadPoolExecutor(workers) as pool:
        parts = list(pool.map(lambda c: impl.blend_sdf(c, anchors, normals, cutoff, tau), chunks))
    return np.concatenate(parts)


def rasterize(xy, depth, width: int, height: int, impl=None):
    impl = impl or _impl
    return impl.rasterize(xy, depth, int(width), int(height))


def available_backends() -> dict[str, object]:
    out: dict[str, object] = {"numpy": _fallback}
    try:
        from . import _ckernels

        out["cython"] = _ckernels
    except ImportError:
        pass
    return out
