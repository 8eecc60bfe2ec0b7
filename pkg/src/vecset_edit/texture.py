"""Geometry-aware texture transfer: normal-difference masks, masked view
compositing, and projection of view images onto vertex colors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .geometry import ImageGrid, TriangleMesh, ViewSpec, canonical_views, rasterize_mesh, render_view

UNSEEN_COLOR = 0.5


@dataclass(frozen=True)
class TextureParams:
    tau_texture: float = 0.005
    blend_power: float = 2.0

    def __post_init__(self):
        if not self.tau_texture > 0:
            raise ValueError("tau_texture must be positive")
        if self.blend_power < 0:
            raise ValueError("blend_power must be >= 0")

    @classmethod
    def from_dict(cls, d: dict) -> "TextureParams":
        return cls(**{k: d[k] for k in cls.__dataclass_fields__ if k in d})


@dataclass(frozen=True, eq=False)
class MultiViewSet:
    views: tuple[ViewSpec, ...]
    images: tuple[ImageGrid, ...]
    normals: tuple[ImageGrid, ...]

    def __post_init__(self):
        for name in ("views", "images", "normals"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if not len(self.views) == len(self.images) == len(self.normals) == 6:
            raise ValueError("a multiview set has six entries")
        for v, im, nm in zip(self.views, self.images, self.normals):
            for g in (im, nm):
                if (g.height, g.width) != (v.image_size, v.image_size):
                    raise ValueError(f"image size does not match view {v.name}")

    @classmethod
    def render(cls, mesh: TriangleMesh, views=None, image_size: int = 64) -> "MultiViewSet":
        """Color and normal renders of ``mesh`` in the six canonical views."""
        views = tuple(views or canonical_views(image_size))
        return cls(views, [render_view(mesh, v, "color") for v in views], [render_view(mesh, v, "normal") for v in views])


def _check_pairs(a, b, what: str) -> None:
    if len(a) != len(b):
        raise ValueError(f"{what}: expected {len(a)} images, got {len(b)}")
    for x, y in zip(a, b):
        if x.pixels.shape[:2] != y.pixels.shape[:2]:
            raise ValueError(f"{what}: image dimensions differ")


def normal_diff_masks(src: TriangleMesh, edited: TriangleMesh, views, params: TextureParams | None = None) -> list[ImageGrid]:
    """1 where any normal channel differs by more than tau_texture."""
    params = params or TextureParams()
    out = []
    for v in views:
        a = render_view(src, v, "normal").pixels
        b = render_view(edited, v, "normal").pixels
        out.append(ImageGrid((np.abs(b - a).max(axis=2) > params.tau_texture).astype(np.float64)))
    return out


def composite_views(src_views: MultiViewSet | list[ImageGrid], generated, masks) -> list[ImageGrid]:
    """Per-pixel select: generated where the mask is set, source elsewhere."""
    src = list(src_views.images if isinstance(src_views, MultiViewSet) else src_views)
    generated, masks = list(generated), list(masks)
    _check_pairs(src, generated, "generated views")
    _check_pairs(src, masks, "masks")
    out = []
    for s, g, m in zip(src, generated, masks):
        if s.channels != g.channels:
            raise ValueError("generated views must match source channel count")
        if not m.is_binary() or m.channels != 1:
            raise ValueError("masks must be single-channel binary")
        out.append(ImageGrid(np.where(m.pixels > 0.5, g.pixels, s.pixels)))
    return out


def _visible_samples(mesh: TriangleMesh, normals: np.ndarray, view: ViewSpec, image: ImageGrid):
    """(mask of vertices seen by the view, their sampled colors, n.d)."""
    n = view.image_size
    facing = normals @ view.view_dir
    uv, depth = view.project(mesh.vertices)
    px = np.floor(uv * n).astype(np.int64)
    inside = ((px >= 0) & (px < n)).all(axis=1)
    pxc = np.clip(px, 0, n - 1)
    zbuf = rasterize_mesh(mesh, view).depth
    cell = 2.0 * view.half_width / n
    # a vertex is unoccluded if nothing in its pixel sits more than a cell nearer
    unoccluded = depth[:] >= zbuf[pxc[:, 1], pxc[:, 0]] - cell
    seen = (facing > 0) & inside & unoccluded
    colors = image.pixels[pxc[:, 1], pxc[:, 0], :3]
    return seen, colors, facing


def project_texture(mesh: TriangleMesh, views, images, params: TextureParams | None = None) -> TriangleMesh:
    """Blend view colors onto vertices with weights max(0, n.d)^p; vertices no
    view sees copy the nearest colored vertex."""
    params = params or TextureParams()
    views, images = list(views), list(images)
    if mesh.is_empty:
        raise ValueError("cannot texture an empty mesh")
    if len(views) != len(images):
        raise ValueError("one image per view required")
    normals = mesh.vertex_normals()
    acc = np.zeros((len(mesh.vertices), 3))
    wsum = np.zeros(len(mesh.vertices))
    for v, im in zip(views, images):
        if (im.height, im.width) != (v.image_size, v.image_size) or im.channels < 3:
            raise ValueError(f"image for view {v.name} must be {v.image_size}x{v.image_size} RGB")
        seen, colors, facing = _visible_samples(mesh, normals, v, im)
        w = np.where(seen, np.maximum(facing, 0.0) ** params.blend_power, 0.0)
        acc += w[:, None] * colors
        wsum += w
    colored = wsum > 0
    out = np.full((len(mesh.vertices), 3), UNSEEN_COLOR)
    out[colored] = acc[colored] / wsum[colored, None]
    if colored.any() and not colored.all():
        _, nearest = cKDTree(mesh.vertices[colored]).query(mesh.vertices[~colored])
        out[~colored] = out[colored][nearest]
    return mesh.with_colors(np.clip(out, 0.0, 1.0))
