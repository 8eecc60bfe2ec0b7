"""Exact CSG primitive SDFs, sampled grids, and isosurface extraction."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree
from skimage import measure

from .mesh import BoundingBox, TriangleMesh


@dataclass(frozen=True)
class Sphere:
    center: tuple[float, float, float]
    radius: float

    def sdf(self, p: np.ndarray) -> np.ndarray:
        return np.linalg.norm(p - np.asarray(self.center), axis=-1) - self.radius

    def bounds(self) -> BoundingBox:
        c = np.asarray(self.center)
        return BoundingBox(c - self.radius, c + self.radius)


@dataclass(frozen=True)
class Box:
    center: tuple[float, float, float]
    half_extents: tuple[float, float, float]

    def sdf(self, p: np.ndarray) -> np.ndarray:
        q = np.abs(p - np.asarray(self.center)) - np.asarray(self.half_extents)
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=-1)
        inside = np.minimum(q.max(axis=-1), 0.0)
        return outside + inside

    def bounds(self) -> BoundingBox:
        c, h = np.asarray(self.center), np.asarray(self.half_extents)
        return BoundingBox(c - h, c + h)


@dataclass(frozen=True)
class Capsule:
    a: tuple[float, float, float]
    b: tuple[float, float, float]
    radius: float

    def sdf(self, p: np.ndarray) -> np.ndarray:
        a, b = np.asarray(self.a), np.asarray(self.b)
        ab = b - a
        denom = float(ab @ ab)
        s = np.clip(((p - a) @ ab) / denom, 0.0, 1.0) if denom > 0 else np.zeros(p.shape[:-1])
        return np.linalg.norm(p - a - s[..., None] * ab, axis=-1) - self.radius

    def bounds(self) -> BoundingBox:
        a, b = np.asarray(self.a), np.asarray(self.b)
        return BoundingBox(np.minimum(a, b) - self.radius, np.maximum(a, b) + self.radius)


Primitive = Sphere | Box | Capsule


@dataclass(frozen=True)
class PrimitiveScene:
    """Union of primitives. The min-union is exact on the surface and a lower
    bound on the distance outside overlapping regions."""

    primitives: tuple[Primitive, ...]

    def __post_init__(self):
        object.__setattr__(self, "primitives", tuple(self.primitives))

    def sdf(self, points: np.ndarray) -> np.ndarray:
        if not self.primitives:
            raise ValueError("no primitives")
        p = np.asarray(points, dtype=np.float64)
        out = self.primitives[0].sdf(p)
        for prim in self.primitives[1:]:
            out = np.minimum(out, prim.sdf(p))
        return out

    def bounds(self) -> BoundingBox:
        if not self.primitives:
            raise ValueError("no primitives")
        boxes = [prim.bounds() for prim in self.primitives]
        return BoundingBox(
            np.min([b.min_corner for b in boxes], axis=0), np.max([b.max_corner for b in boxes], axis=0)
        )

    def to_dict(self) -> dict:
        out = []
        for prim in self.primitives:
            if isinstance(prim, Sphere):
                out.append({"type": "sphere", "center": list(prim.center), "radius": prim.radius})
            elif isinstance(prim, Box):
                out.append({"type": "box", "center": list(prim.center), "half_extents": list(prim.half_extents)})
            else:
                out.append({"type": "capsule", "a": list(prim.a), "b": list(prim.b), "radius": prim.radius})
        return {"primitives": out}

    @classmethod
    def from_dict(cls, d: dict) -> "PrimitiveScene":
        prims: list[Primitive] = []
        for item in d.get("primitives", []):
            kind = item["type"]
            if kind == "sphere":
                prims.append(Sphere(tuple(item["center"]), float(item["radius"])))
            elif kind == "box":
                prims.append(Box(tuple(item["center"]), tuple(item["half_extents"])))
            elif kind == "capsule":
                prims.append(Capsule(tuple(item["a"]), tuple(item["b"]), float(item["radius"])))
            else:
                raise ValueError(f"unknown primitive type {kind!r}")
        if not prims:
            raise ValueError("no primitives")
        return cls(tuple(prims))


def scene_sdf(scene: PrimitiveScene, query) -> float | np.ndarray:
    """Signed distance of one point (returns float) or an (N, 3) batch."""
    q = np.asarray(query, dtype=np.float64)
    out = scene.sdf(q)
    return float(out) if q.ndim == 1 else out


@dataclass(frozen=True, eq=False)
class SdfGrid:
    """Samples on ``resolution`` points per axis spanning ``origin`` to
    ``origin + extent`` inclusive. ``values[i, j, k]`` sits at
    ``origin + (i, j, k) * spacing``."""

    resolution: int
    origin: np.ndarray
    extent: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        origin = np.asarray(self.origin, dtype=np.float64).reshape(3)
        extent = np.asarray(self.extent, dtype=np.float64).reshape(3)
        values = np.asarray(self.values, dtype=np.float64)
        r = int(self.resolution)
        if r < 2:
            raise ValueError("resolution must be >= 2")
        if (extent <= 0).any():
            raise ValueError("extent must be positive")
        if values.shape != (r, r, r):
            raise ValueError(f"values must have shape {(r, r, r)}")
        if not np.isfinite(values).all():
            raise ValueError("grid values must be finite")
        object.__setattr__(self, "resolution", r)
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "extent", extent)
        object.__setattr__(self, "values", values)

    @property
    def spacing(self) -> np.ndarray:
        return self.extent / (self.resolution - 1)

    @property
    def cell_diagonal(self) -> float:
        return float(np.linalg.norm(self.spacing))

    def points(self) -> np.ndarray:
        return grid_points(self.origin, self.extent, self.resolution)

    def trilinear(self, points: np.ndarray) -> np.ndarray:
        p = (np.asarray(points, dtype=np.float64).reshape(-1, 3) - self.origin) / self.spacing
        r = self.resolution
        i0 = np.clip(np.floor(p).astype(np.int64), 0, r - 2)
        f = np.clip(p - i0, 0.0, 1.0)
        out = np.zeros(len(p))
        for dx in (0, 1):
            for dy in (0, 1):
                for dz in (0, 1):
                    w = (
                        (f[:, 0] if dx else 1 - f[:, 0])
                        * (f[:, 1] if dy else 1 - f[:, 1])
                        * (f[:, 2] if dz else 1 - f[:, 2])
                    )
                    out += w * self.values[i0[:, 0] + dx, i0[:, 1] + dy, i0[:, 2] + dz]
        return out


def grid_points(origin, extent, resolution: int) -> np.ndarray:
    axes = [np.linspace(o, o + e, resolution) for o, e in zip(origin, extent)]
    g = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    return g.reshape(-1, 3)


def sample_grid(fn, box: BoundingBox, resolution: int) -> SdfGrid:
    """Evaluate ``fn((N, 3)) -> (N,)`` on a grid covering ``box``."""
    extent = np.maximum(box.size, 1e-6)
    pts = grid_points(box.min_corner, extent, resolution)
    vals = np.asarray(fn(pts), dtype=np.float64).reshape(resolution, resolution, resolution)
    return SdfGrid(resolution, box.min_corner, extent, vals)


def scene_grid(scene: PrimitiveScene, resolution: int, pad: float = 0.05) -> SdfGrid:
    return sample_grid(scene.sdf, scene.bounds().inflate(pad), resolution)


def marching_cubes(grid: SdfGrid, iso: float = 0.0, mask: np.ndarray | None = None) -> TriangleMesh:
    """Isosurface at ``iso`` with faces wound so normals point toward larger values.

    ``mask`` optionally restricts extraction to cells whose corners are all
    marked valid. A grid without a crossing yields an empty mesh.
    """
    vals = grid.values
    lo, hi = float(vals.min()), float(vals.max())
    if not lo < iso < hi:
        return TriangleMesh.empty()
    if mask is not None:
        point_ok = np.asarray(mask, dtype=bool).reshape(vals.shape)
        # skimage gates the cube spanning [i-1, i] on mask[i]; require all eight corners
        n0, n1, n2 = vals.shape
        mask = np.zeros_like(point_ok)
        mask[1:, 1:, 1:] = True
        for dx in (0, 1):
            for dy in (0, 1):
                for dz in (0, 1):
                    mask[1:, 1:, 1:] &= point_ok[dx : n0 - 1 + dx, dy : n1 - 1 + dy, dz : n2 - 1 + dz]
        if not mask.any():
            return TriangleMesh.empty()
        vals = np.where(point_ok, vals, hi)
    try:
        verts, faces, _, _ = measure.marching_cubes(
            vals, level=iso, spacing=tuple(grid.spacing), mask=mask, allow_degenerate=False
        )
    except (ValueError, RuntimeError):
        return TriangleMesh.empty()
    if len(faces) == 0:
        return TriangleMesh.empty()
    verts = verts.astype(np.float64) + grid.origin
    faces = faces.astype(np.int64)
    return TriangleMesh(verts, faces).compact()


def _closest_on_triangles(p: np.ndarray, a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Closest points on triangles (a, b, c) to points p, all (N, 3)."""
    ab, ac, ap = b - a, c - a, p - a
    d1 = np.einsum("ij,ij->i", ab, ap)
    d2 = np.einsum("ij,ij->i", ac, ap)
    bp = p - b
    d3 = np.einsum("ij,ij->i", ab, bp)
    d4 = np.einsum("ij,ij->i", ac, bp)
    cp = p - c
    d5 = np.einsum("ij,ij->i", ab, cp)
    d6 = np.einsum("ij,ij->i", ac, cp)
    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2

    out = np.empty_like(p)
    done = np.zeros(len(p), dtype=bool)

    def put(cond, val):
        nonlocal done
        sel = cond & ~done
        out[sel] = val[sel]
        done |= sel

    with np.errstate(divide="ignore", invalid="ignore"):
        put((d1 <= 0) & (d2 <= 0), a)
        put((d3 >= 0) & (d4 <= d3), b)
        v = d1 / (d1 - d3)
        put((vc <= 0) & (d1 >= 0) & (d3 <= 0), a + v[:, None] * ab)
        put((d6 >= 0) & (d5 <= d6), c)
        w = d2 / (d2 - d6)
        put((vb <= 0) & (d2 >= 0) & (d6 <= 0), a + w[:, None] * ac)
        w2 = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        put((va <= 0) & ((d4 - d3) >= 0) & ((d5 - d6) >= 0), b + w2[:, None] * (c - b))
        denom = 1.0 / (va + vb + vc)
        v = vb * denom
        w = vc * denom
        put(np.ones(len(p), dtype=bool), a + v[:, None] * ab + w[:, None] * ac)
    return out


def mesh_sdf(mesh: TriangleMesh, queries: np.ndarray, candidates: int = 16) -> np.ndarray:
    """Approximate signed distance to an arbitrary mesh.

    Unsigned distance to the closest of the ``candidates`` triangles nearest by
    centroid, signed by the facing of that triangle's normal.
    """
    if mesh.is_empty:
        raise ValueError("no surface")
    q = np.asarray(queries, dtype=np.float64).reshape(-1, 3)
    tri = mesh.vertices[mesh.faces]
    tree = cKDTree(tri.mean(axis=1))
    k = min(candidates, len(tri))
    _, idx = tree.query(q, k=k)
    idx = np.asarray(idx).reshape(len(q), k)
    best_d = np.full(len(q), np.inf)
    best_s = np.ones(len(q))
    normals = mesh.face_normals()
    for col in range(k):
        t = idx[:, col]
        cp = _closest_on_triangles(q, tri[t, 0], tri[t, 1], tri[t, 2])
        diff = q - cp
        d = np.linalg.norm(diff, axis=1)
        better = d < best_d
        best_d[better] = d[better]
        s = np.einsum("ij,ij->i", diff, normals[t])
        best_s[better] = np.where(s < 0, -1.0, 1.0)[better]
    return best_s * best_d
