"""Triangle meshes, boxes, and area-weighted surface sampling."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEGENERATE_AREA = 1e-12


def _as_points(a, name: str) -> np.ndarray:
    arr = np.asarray(a, dtype=np.float64)
    if arr.size == 0:
        return np.zeros((0, 3))
    arr = arr.reshape(-1, 3)
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} contain non-finite values")
    return arr


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    """Indexed triangle mesh.

    Construction drops zero-area faces (twice-area below ``DEGENERATE_AREA``)
    and validates face indices. ``vertex_colors`` is an optional (V, 3) array
    in [0, 1].
    """

    vertices: np.ndarray
    faces: np.ndarray
    vertex_colors: np.ndarray | None = None
    watertight: bool = field(init=False, default=False)

    def __post_init__(self):
        v = _as_points(self.vertices, "vertices")
        f = np.asarray(self.faces, dtype=np.int64)
        f = f.reshape(-1, 3) if f.size else np.zeros((0, 3), dtype=np.int64)
        if f.size and (f.min() < 0 or f.max() >= len(v)):
            raise ValueError("face index out of range")
        if len(f):
            cross = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
            keep = np.linalg.norm(cross, axis=1) > DEGENERATE_AREA
            keep &= (f[:, 0] != f[:, 1]) & (f[:, 1] != f[:, 2]) & (f[:, 0] != f[:, 2])
            f = f[keep]
        colors = self.vertex_colors
        if colors is not None:
            colors = np.asarray(colors, dtype=np.float64).reshape(-1, 3)
            if len(colors) != len(v):
                raise ValueError("vertex_colors length does not match vertices")
        v.setflags(write=False)
        f.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)
        object.__setattr__(self, "vertex_colors", colors)
        object.__setattr__(self, "watertight", _is_watertight(f))

    @classmethod
    def empty(cls) -> "TriangleMesh":
        return cls(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))

    @property
    def is_empty(self) -> bool:
        return len(self.faces) == 0

    def face_normals(self) -> np.ndarray:
        v, f = self.vertices, self.faces
        n = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
        return n / np.linalg.norm(n, axis=1, keepdims=True)

    def face_areas(self) -> np.ndarray:
        v, f = self.vertices, self.faces
        return 0.5 * np.linalg.norm(np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]]), axis=1)

    def area(self) -> float:
        return float(self.face_areas().sum())

    def vertex_normals(self) -> np.ndarray:
        """Area-weighted vertex normals; isolated vertices get +z."""
        v, f = self.vertices, self.faces
        acc = np.zeros_like(v)
        n = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
        for k in range(3):
            np.add.at(acc, f[:, k], n)
        norm = np.linalg.norm(acc, axis=1, keepdims=True)
        out = np.tile([0.0, 0.0, 1.0], (len(v), 1))
        ok = norm[:, 0] > 0
        out[ok] = acc[ok] / norm[ok]
        return out

    def euler_characteristic(self) -> int:
        used = np.unique(self.faces)
        return len(used) - len(_unique_edges(self.faces)) + len(self.faces)

    def with_colors(self, colors: np.ndarray | None) -> "TriangleMesh":
        return TriangleMesh(self.vertices, self.faces, colors)

    def compact(self) -> "TriangleMesh":
        """Drop unreferenced vertices, keeping the order of the rest."""
        used = np.unique(self.faces)
        if len(used) == len(self.vertices):
            return self
        remap = np.full(len(self.vertices), -1, dtype=np.int64)
        remap[used] = np.arange(len(used))
        colors = None if self.vertex_colors is None else self.vertex_colors[used]
        return TriangleMesh(self.vertices[used], remap[self.faces], colors)

    def bounds(self) -> "BoundingBox":
        if len(self.vertices) == 0:
            raise ValueError("empty mesh has no bounds")
        return BoundingBox(self.vertices.min(axis=0), self.vertices.max(axis=0))


def _unique_edges(faces: np.ndarray) -> np.ndarray:
    if len(faces) == 0:
        return np.zeros((0, 2), dtype=np.int64)
    e = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    return np.unique(np.sort(e, axis=1), axis=0)


def _is_watertight(faces: np.ndarray) -> bool:
    if len(faces) == 0:
        return False
    e = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    _, counts = np.unique(np.sort(e, axis=1), axis=0, return_counts=True)
    return bool((counts == 2).all())


def concat_meshes(meshes: list[TriangleMesh]) -> TriangleMesh:
    meshes = [m for m in meshes if len(m.vertices)]
    if not meshes:
        return TriangleMesh.empty()
    verts, faces, colors = [], [], []
    offset = 0
    has_colors = all(m.vertex_colors is not None for m in meshes)
    for m in meshes:
        verts.append(m.vertices)
        faces.append(m.faces + offset)
        offset += len(m.vertices)
        if has_colors:
            colors.append(m.vertex_colors)
    return TriangleMesh(np.concatenate(verts), np.concatenate(faces), np.concatenate(colors) if has_colors else None)


@dataclass(frozen=True)
class BoundingBox:
    min_corner: np.ndarray
    max_corner: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.min_corner, dtype=np.float64).reshape(3)
        hi = np.asarray(self.max_corner, dtype=np.float64).reshape(3)
        if (lo > hi).any():
            raise ValueError("min_corner must be <= max_corner componentwise")
        object.__setattr__(self, "min_corner", lo)
        object.__setattr__(self, "max_corner", hi)

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Closed-interval membership test, (N, 3) -> (N,) bool."""
        p = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        return ((p >= self.min_corner) & (p <= self.max_corner)).all(axis=1)

    def inflate(self, amount: float) -> "BoundingBox":
        return BoundingBox(self.min_corner - amount, self.max_corner + amount)

    @property
    def size(self) -> np.ndarray:
        return self.max_corner - self.min_corner

    def to_mesh(self) -> TriangleMesh:
        return box_mesh(self.min_corner, self.max_corner)

    def to_dict(self) -> dict:
        return {"min": self.min_corner.tolist(), "max": self.max_corner.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "BoundingBox":
        return cls(np.asarray(d["min"]), np.asarray(d["max"]))


@dataclass(frozen=True, eq=False)
class SurfaceSamples:
    """Rows of position and unit normal; ``as_array`` gives the (N, 6) layout."""

    positions: np.ndarray
    normals: np.ndarray

    def __len__(self) -> int:
        return len(self.positions)

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.positions, self.normals], axis=1)


def sample_surface(mesh: TriangleMesh, n: int, seed: int) -> SurfaceSamples:
    """Area-weighted uniform samples with face normals."""
    if mesh.is_empty:
        raise ValueError("no surface")
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    areas = mesh.face_areas()
    cdf = np.cumsum(areas)
    face = np.searchsorted(cdf, rng.random(n) * cdf[-1], side="right")
    face = np.minimum(face, len(areas) - 1)
    r1 = np.sqrt(rng.random(n))
    r2 = rng.random(n)
    v = mesh.vertices[mesh.faces[face]]
    pos = (1 - r1)[:, None] * v[:, 0] + (r1 * (1 - r2))[:, None] * v[:, 1] + (r1 * r2)[:, None] * v[:, 2]
    return SurfaceSamples(pos, mesh.face_normals()[face])


def normalize_mesh(mesh: TriangleMesh, margin: float = 0.05) -> tuple[TriangleMesh, np.ndarray, float]:
    """Center and scale into [-1, 1]^3 leaving ``margin`` on the longest axis.

    Returns the mesh with the applied center and scale (``v' = (v - c) * s``).
    """
    bb = mesh.bounds()
    center = 0.5 * (bb.min_corner + bb.max_corner)
    half = float(bb.size.max()) / 2
    scale = (1.0 - margin) / half if half > 0 else 1.0
    out = TriangleMesh((mesh.vertices - center) * scale, mesh.faces, mesh.vertex_colors)
    return out, center, scale


def box_mesh(lo, hi) -> TriangleMesh:
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    corners = np.array([[x, y, z] for x in (0, 1) for y in (0, 1) for z in (0, 1)], dtype=np.float64)
    v = lo + corners * (hi - lo)
    # corner index = 4x + 2y + z; faces wound counter-clockwise seen from outside
    f = [
        [0, 1, 3], [0, 3, 2],  # -x
        [4, 6, 7], [4, 7, 5],  # +x
        [0, 4, 5], [0, 5, 1],  # -y
        [2, 3, 7], [2, 7, 6],  # +y
        [0, 2, 6], [0, 6, 4],  # -z
        [1, 5, 7], [1, 7, 3],  # +z
    ]
    return TriangleMesh(v, np.array(f))


def quad_mesh(size: float = 1.0, z: float = 0.0) -> TriangleMesh:
    """Square in the plane ``z`` facing +z, centred on the z axis."""
    h = size / 2
    v = np.array([[-h, -h, z], [h, -h, z], [h, h, z], [-h, h, z]])
    return TriangleMesh(v, np.array([[0, 1, 2], [0, 2, 3]]))


def icosphere(radius: float = 1.0, subdivisions: int = 3, center=(0.0, 0.0, 0.0)) -> TriangleMesh:
    t = (1 + 5**0.5) / 2
    v = np.array(
        [[-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
         [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
         [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1]],
        dtype=np.float64,
    )
    f = np.array(
        [[0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
         [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
         [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
         [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1]]
    )
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    for _ in range(subdivisions):
        edges = np.sort(np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]]), axis=1)
        uniq, inv = np.unique(edges, axis=0, return_inverse=True)
        mids = v[uniq[:, 0]] + v[uniq[:, 1]]
        mids /= np.linalg.norm(mids, axis=1, keepdims=True)
        m = inv.reshape(3, -1).T + len(v)
        v = np.concatenate([v, mids])
        a, b, c = f[:, 0], f[:, 1], f[:, 2]
        ab, bc, ca = m[:, 0], m[:, 1], m[:, 2]
        f = np.concatenate(
            [np.stack([a, ab, ca], 1), np.stack([b, bc, ab], 1), np.stack([c, ca, bc], 1), np.stack([ab, bc, ca], 1)]
        )
    return TriangleMesh(v * radius + np.asarray(center, dtype=np.float64), f)
