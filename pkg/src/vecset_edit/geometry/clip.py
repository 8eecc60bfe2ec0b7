"""Clipping meshes against axis-aligned boxes."""

from __future__ import annotations

import numpy as np

from .mesh import BoundingBox, TriangleMesh


def _clip_polygon(poly: list[np.ndarray], axis: int, value: float, keep_below: bool) -> list[np.ndarray]:
    """Sutherland-Hodgman against one axis plane. Points carry extra attributes
    after the first three entries; new points land exactly on the plane."""
    if not poly:
        return []

    def inside(p):
        return p[axis] <= value if keep_below else p[axis] >= value

    out = []
    prev = poly[-1]
    prev_in = inside(prev)
    for cur in poly:
        cur_in = inside(cur)
        if cur_in != prev_in:
            s = (value - prev[axis]) / (cur[axis] - prev[axis])
            x = prev + s * (cur - prev)
            x[axis] = value
            out.append(x)
        if cur_in:
            out.append(cur)
        prev, prev_in = cur, cur_in
    return out


def _fan(poly: list[np.ndarray]) -> list[list[np.ndarray]]:
    return [[poly[0], poly[i], poly[i + 1]] for i in range(1, len(poly) - 1)]


def _attributes(mesh: TriangleMesh) -> np.ndarray:
    if mesh.vertex_colors is None:
        return mesh.vertices
    return np.concatenate([mesh.vertices, mesh.vertex_colors], axis=1)


def _assemble(mesh: TriangleMesh, keep_faces: np.ndarray, new_tris: list[list[np.ndarray]], clamp: BoundingBox | None):
    attrs = _attributes(mesh)
    faces = mesh.faces[keep_faces]
    if new_tris:
        extra = np.array([p for tri in new_tris for p in tri])
        if clamp is not None:
            extra[:, :3] = np.clip(extra[:, :3], clamp.min_corner, clamp.max_corner)
        base = len(attrs)
        attrs = np.concatenate([attrs, extra])
        faces = np.concatenate([faces, base + np.arange(len(extra)).reshape(-1, 3)])
    colors = attrs[:, 3:6] if mesh.vertex_colors is not None else None
    return TriangleMesh(attrs[:, :3], faces, colors).compact()


def crop_mesh(mesh: TriangleMesh, box: BoundingBox) -> TriangleMesh:
    """The part of ``mesh`` inside the closed ``box``."""
    if mesh.is_empty:
        return TriangleMesh.empty()
    lo, hi = box.min_corner, box.max_corner
    tv = mesh.vertices[mesh.faces]
    all_in = ((tv >= lo) & (tv <= hi)).all(axis=(1, 2))
    all_out = ((tv < lo).all(axis=1) | (tv > hi).all(axis=1)).any(axis=1)
    straddle = np.nonzero(~all_in & ~all_out)[0]
    attrs = _attributes(mesh)
    tris = []
    for fi in straddle:
        poly = [attrs[i].copy() for i in mesh.faces[fi]]
        for axis in range(3):
            poly = _clip_polygon(poly, axis, lo[axis], keep_below=False)
            poly = _clip_polygon(poly, axis, hi[axis], keep_below=True)
        if len(poly) >= 3:
            tris.extend(_fan(poly))
    return _assemble(mesh, all_in, tris, box)


def crop_mesh_outside(mesh: TriangleMesh, box: BoundingBox) -> TriangleMesh:
    """The part of ``mesh`` outside the open ``box`` (its complement)."""
    if mesh.is_empty:
        return TriangleMesh.empty()
    lo, hi = box.min_corner, box.max_corner
    tv = mesh.vertices[mesh.faces]
    all_in = ((tv >= lo) & (tv <= hi)).all(axis=(1, 2))
    all_out = ((tv <= lo).all(axis=1) | (tv >= hi).all(axis=1)).any(axis=1)
    straddle = np.nonzero(~all_in & ~all_out)[0]
    attrs = _attributes(mesh)
    tris = []
    for fi in straddle:
        rest = [attrs[i].copy() for i in mesh.faces[fi]]
        for axis in range(3):
            for value, below in ((lo[axis], True), (hi[axis], False)):
                piece = _clip_polygon(rest, axis, value, keep_below=below)
                if len(piece) >= 3:
                    tris.extend(_fan(piece))
                rest = _clip_polygon(rest, axis, value, keep_below=not below)
    return _assemble(mesh, all_out & ~all_in, tris, None)
