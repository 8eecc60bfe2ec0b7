"""Orthographic z-buffer rendering of meshes into small image grids."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import kernels
from .mesh import TriangleMesh

CHANNELS = ("normal", "silhouette", "depth", "color")
NORMAL_BACKGROUND = 0.5


@dataclass(frozen=True, eq=False)
class ImageGrid:
    """H x W x C float raster. Masks use one channel with values in {0, 1}."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim == 2:
            px = px[:, :, None]
        if px.ndim != 3:
            raise ValueError("pixels must be H x W x C")
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]

    def is_binary(self) -> bool:
        return bool(np.isin(self.pixels, (0.0, 1.0)).all())

    def flat_mask(self) -> np.ndarray:
        """Row-major flattening of a single-channel mask, length H*W."""
        if self.channels != 1:
            raise ValueError("mask must have one channel")
        return self.pixels[:, :, 0].reshape(-1)

    @classmethod
    def zeros(cls, size: int, channels: int = 1) -> "ImageGrid":
        return cls(np.zeros((size, size, channels)))


@dataclass(frozen=True)
class ViewSpec:
    """Orthographic camera on a sphere around the origin.

    The camera looks along ``-view_dir``; image x runs along ``right`` and
    image rows run downward along ``-up``. ``half_width`` is the half extent of
    the square view window in scene units.
    """

    azimuth_deg: float
    elevation_deg: float
    image_size: int = 64
    half_width: float = 1.0

    def __post_init__(self):
        if int(self.image_size) < 8:
            raise ValueError("image_size must be >= 8")
        if self.half_width <= 0:
            raise ValueError("half_width must be positive")

    @property
    def name(self) -> str:
        return f"az{int(round(self.azimuth_deg)) % 360:03d}_el{int(round(self.elevation_deg)) % 360:03d}"

    def basis(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        az, el = np.radians(self.azimuth_deg), np.radians(self.elevation_deg)
        d = np.array([np.sin(az) * np.cos(el), np.sin(el), np.cos(az) * np.cos(el)])
        r = np.array([np.cos(az), 0.0, -np.sin(az)])
        u = np.cross(d, r)
        return d, r, u

    @property
    def view_dir(self) -> np.ndarray:
        """Unit vector from the scene toward the camera."""
        return self.basis()[0]

    def project(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Normalized image coordinates in [0, 1]^2 (x right, y down) and depth
        (larger is nearer the camera)."""
        d, r, u = self.basis()
        p = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        hw = self.half_width
        uv = np.stack([(p @ r + hw) / (2 * hw), (hw - p @ u) / (2 * hw)], axis=1)
        return uv, p @ d

    def pixel_centers(self) -> np.ndarray:
        """(H*W, 2) normalized pixel centres in row-major order."""
        n = self.image_size
        c = (np.arange(n) + 0.5) / n
        yy, xx = np.meshgrid(c, c, indexing="ij")
        return np.stack([xx.reshape(-1), yy.reshape(-1)], axis=1)

    def to_dict(self) -> dict:
        return {
            "azimuth_deg": self.azimuth_deg,
            "elevation_deg": self.elevation_deg,
            "image_size": self.image_size,
            "half_width": self.half_width,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ViewSpec":
        return cls(float(d["azimuth_deg"]), float(d["elevation_deg"]), int(d.get("image_size", 64)), float(d.get("half_width", 1.0)))


def canonical_views(image_size: int = 64, half_width: float = 1.0) -> list[ViewSpec]:
    """Four horizontal azimuths plus top and bottom."""
    angles = [(0, 0), (90, 0), (180, 0), (270, 0), (0, 90), (0, 270)]
    return [ViewSpec(a, e, image_size, half_width) for a, e in angles]


@dataclass(frozen=True, eq=False)
class Fragments:
    """Per-pixel z-buffer output of one view."""

    depth: np.ndarray
    face_id: np.ndarray
    bary: np.ndarray

    @property
    def covered(self) -> np.ndarray:
        return self.face_id >= 0


def rasterize_mesh(mesh: TriangleMesh, view: ViewSpec) -> Fragments:
    n = view.image_size
    if mesh.is_empty:
        return Fragments(np.full((n, n), -np.inf), np.full((n, n), -1, dtype=np.int64), np.zeros((n, n, 3)))
    uv, depth = view.project(mesh.vertices)
    xy = (uv * n)[mesh.faces]
    zbuf, fid, bary = kernels.rasterize(xy, depth[mesh.faces], n, n)
    return Fragments(zbuf, fid, bary)


def render_view(mesh: TriangleMesh, view: ViewSpec, channel: str = "normal") -> ImageGrid:
    if channel not in CHANNELS:
        raise ValueError(f"unknown channel {channel!r}")
    frag = rasterize_mesh(mesh, view)
    n = view.image_size
    hit = frag.covered
    if channel == "silhouette":
        return ImageGrid(hit.astype(np.float64))
    if channel == "depth":
        hw = view.half_width
        img = np.zeros((n, n))
        img[hit] = np.clip((frag.depth[hit] + hw) / (2 * hw), 0.0, 1.0)
        return ImageGrid(img)
    if channel == "normal":
        img = np.full((n, n, 3), NORMAL_BACKGROUND)
        if hit.any():
            img[hit] = (mesh.face_normals()[frag.face_id[hit]] + 1.0) / 2.0
        return ImageGrid(img)
    img = np.zeros((n, n, 3))
    if hit.any():
        colors = mesh.vertex_colors if mesh.vertex_colors is not None else np.ones((len(mesh.vertices), 3))
        tri = colors[mesh.faces[frag.face_id[hit]]]
        img[hit] = np.clip(np.einsum("pk,pkc->pc", frag.bary[hit], tri), 0.0, 1.0)
    return ImageGrid(img)
