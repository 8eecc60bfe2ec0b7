"""OBJ meshes, binary PPM/PGM images, and CSV point sets."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .mesh import SurfaceSamples, TriangleMesh
from .raster import ImageGrid

POINTS_HEADER = "x,y,z,nx,ny,nz"


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_obj(mesh: TriangleMesh, path: str | Path) -> None:
    """ASCII OBJ with ``v`` (plus ``r g b`` when colored), ``vn`` and ``f a//a``."""
    lines = []
    normals = mesh.vertex_normals() if len(mesh.vertices) else np.zeros((0, 3))
    colors = mesh.vertex_colors
    for i, v in enumerate(mesh.vertices):
        row = "v " + " ".join(_fmt(x) for x in v)
        if colors is not None:
            row += " " + " ".join(_fmt(c) for c in colors[i])
        lines.append(row)
    for n in normals:
        lines.append("vn " + " ".join(_fmt(x) for x in n))
    for f in mesh.faces + 1:
        lines.append("f " + " ".join(f"{i}//{i}" for i in f))
    Path(path).write_text("\n".join(lines) + "\n")


def read_obj(path: str | Path) -> TriangleMesh:
    verts, colors, faces = [], [], []
    for raw in Path(path).read_text().splitlines():
        parts = raw.split()
        if not parts:
            continue
        if parts[0] == "v":
            vals = [float(x) for x in parts[1:]]
            verts.append(vals[:3])
            colors.append(vals[3:6] if len(vals) >= 6 else None)
        elif parts[0] == "f":
            idx = []
            for tok in parts[1:]:
                i = int(tok.split("/")[0])
                idx.append(i - 1 if i > 0 else len(verts) + i)
            faces.extend([idx[0], idx[k], idx[k + 1]] for k in range(1, len(idx) - 1))
    has_colors = bool(colors) and all(c is not None for c in colors)
    return TriangleMesh(
        np.array(verts, dtype=np.float64).reshape(-1, 3),
        np.array(faces, dtype=np.int64).reshape(-1, 3),
        np.array(colors, dtype=np.float64) if has_colors else None,
    )


def quantize(pixels: np.ndarray) -> np.ndarray:
    return np.round(np.clip(pixels, 0.0, 1.0) * 255.0).astype(np.uint8)


def write_image(image: ImageGrid, path: str | Path) -> None:
    """P6 for three channels, P5 for one; 8-bit."""
    data = quantize(image.pixels)
    if image.channels == 3:
        magic = b"P6"
    elif image.channels == 1:
        magic = b"P5"
        data = data[:, :, 0]
    else:
        raise ValueError("only 1- or 3-channel images can be written")
    header = magic + b"\n%d %d\n255\n" % (image.width, image.height)
    Path(path).write_bytes(header + data.tobytes())


def read_image(path: str | Path) -> ImageGrid:
    raw = Path(path).read_bytes()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while raw[pos : pos + 1].isspace():
            pos += 1
        if raw[pos : pos + 1] == b"#":
            while raw[pos : pos + 1] not in (b"\n", b""):
                pos += 1
            continue
        start = pos
        while not raw[pos : pos + 1].isspace():
            pos += 1
        tokens.append(raw[start:pos])
    pos += 1
    magic, w, h, maxval = tokens[0], int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval != 255:
        raise ValueError("only 8-bit images are supported")
    ch = {b"P6": 3, b"P5": 1}.get(magic)
    if ch is None:
        raise ValueError(f"unsupported image format {magic!r}")
    data = np.frombuffer(raw[pos : pos + w * h * ch], dtype=np.uint8).reshape(h, w, ch)
    return ImageGrid(data.astype(np.float64) / 255.0)


def write_points(samples: SurfaceSamples, path: str | Path) -> None:
    np.savetxt(path, samples.as_array(), delimiter=",", header=POINTS_HEADER, comments="", fmt="%.17g")


def read_points(path: str | Path) -> SurfaceSamples:
    with open(path) as fh:
        header = fh.readline().strip()
    if header != POINTS_HEADER:
        raise ValueError(f"expected header {POINTS_HEADER!r}")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return SurfaceSamples(data[:, :3], data[:, 3:6])
