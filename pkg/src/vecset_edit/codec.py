"""Kernel codec between surfaces and sets of anchored latent tokens.

Encoding picks anchors by farthest-point sampling over a surface point cloud
and stores, per token, the anchor position, a kernel-smoothed normal and the
local sample radius. Decoding blends the tokens' tangent planes into a signed
distance field, so any subset of tokens decodes to the geometry near its
anchors.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from . import kernels
from .geometry import BoundingBox, SurfaceSamples, TriangleMesh, marching_cubes
from .geometry.sdf import grid_points, SdfGrid

FEATURE_WIDTH = 8
FIELD_LAYOUT = ["x", "y", "z", "nx", "ny", "nz", "radius", "reserved"]
ARCHIVE_FORMAT = "vse-tokens"
ARCHIVE_VERSION = 1


@dataclass(frozen=True)
class CodecParams:
    n_tok: int = 512
    n_surf: int = 20000
    tau_enc: float = 0.02
    tau_dec: float = 0.005
    far_field_cutoff: float = 0.15
    grid_resolution: int = 96

    def __post_init__(self):
        for name, val in asdict(self).items():
            if not val > 0:
                raise ValueError(f"{name} must be positive")
        if self.n_tok > self.n_surf:
            raise ValueError("n_tok must not exceed n_surf")

    @classmethod
    def from_dict(cls, d: dict) -> "CodecParams":
        known = {k: d[k] for k in cls.__dataclass_fields__ if k in d}
        return cls(**known)


@dataclass(frozen=True)
class Token:
    id: int
    anchor_position: np.ndarray
    anchor_normal: np.ndarray
    feature: np.ndarray


def _unit_rows(n: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(n, axis=1, keepdims=True)
    out = n.copy()
    # rows that are already unit stay bit-identical to the stored feature
    fix = np.abs(norm[:, 0] - 1.0) > 1e-9
    ok = fix & (norm[:, 0] > 1e-12)
    out[ok] = n[ok] / norm[ok]
    out[fix & ~ok] = (0.0, 0.0, 1.0)
    return out


@dataclass(frozen=True, eq=False)
class TokenSet:
    """Unordered set of tokens with unique integer ids.

    ``features`` is (N, C); columns 0-2 are the anchor position and 3-5 the
    anchor normal. Row order carries no meaning; use ``sorted()`` for id order.
    """

    ids: np.ndarray
    features: np.ndarray
    params: CodecParams = field(default_factory=CodecParams)

    def __post_init__(self):
        ids = np.asarray(self.ids, dtype=np.int64).reshape(-1)
        feats = np.asarray(self.features, dtype=np.float64)
        feats = feats.reshape(len(ids), -1) if feats.size else np.zeros((len(ids), FEATURE_WIDTH))
        if feats.shape[1] < 6:
            raise ValueError("features need at least position and normal columns")
        if len(np.unique(ids)) != len(ids):
            raise ValueError("token ids must be unique")
        ids.setflags(write=False)
        feats.setflags(write=False)
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "features", feats)

    def __len__(self) -> int:
        return len(self.ids)

    def __iter__(self):
        pos, nrm = self.positions, self.normals
        for k in range(len(self)):
            yield Token(int(self.ids[k]), pos[k], nrm[k], self.features[k])

    @property
    def positions(self) -> np.ndarray:
        return self.features[:, :3]

    @property
    def normals(self) -> np.ndarray:
        return _unit_rows(self.features[:, 3:6])

    def index_of(self, ids) -> np.ndarray:
        """Row indices of the given ids (all must be present)."""
        ids = np.asarray(ids, dtype=np.int64).reshape(-1)
        order = np.argsort(self.ids)
        pos = np.searchsorted(self.ids, ids, sorter=order)
        pos = np.minimum(pos, len(self.ids) - 1)
        rows = order[pos] if len(self.ids) else pos
        if len(ids) and (len(self.ids) == 0 or (self.ids[rows] != ids).any()):
            raise KeyError("unknown token id")
        return rows

    def subset(self, ids) -> "TokenSet":
        rows = self.index_of(ids)
        return TokenSet(self.ids[rows], self.features[rows], self.params)

    def without(self, ids) -> "TokenSet":
        keep = ~np.isin(self.ids, np.asarray(ids, dtype=np.int64))
        return TokenSet(self.ids[keep], self.features[keep], self.params)

    def with_features(self, features: np.ndarray) -> "TokenSet":
        return TokenSet(self.ids, features, self.params)

    def sorted(self) -> "TokenSet":
        order = np.argsort(self.ids, kind="stable")
        return TokenSet(self.ids[order], self.features[order], self.params)

    @staticmethod
    def concat(a: "TokenSet", b: "TokenSet") -> "TokenSet":
        return TokenSet(np.concatenate([a.ids, b.ids]), np.concatenate([a.features, b.features]), a.params)


def encode(samples: SurfaceSamples, params: CodecParams | None = None, seed: int = 0) -> TokenSet:
    params = params or CodecParams()
    n = len(samples)
    if n < params.n_tok:
        raise ValueError(f"need at least {params.n_tok} surface samples, got {n}")
    pos = np.asarray(samples.positions, dtype=np.float64)
    nrm = np.asarray(samples.normals, dtype=np.float64)
    start = int(np.random.default_rng(seed).integers(n))
    idx = kernels.farthest_point_sampling(pos, params.n_tok, start)
    anchors = pos[idx]

    radius = 3.0 * np.sqrt(params.tau_enc)
    tree = cKDTree(pos)
    neigh = tree.query_ball_point(anchors, radius)
    # flatten the ragged neighbour lists; every anchor has itself as a neighbour
    counts = np.fromiter((len(nb) for nb in neigh), dtype=np.int64, count=len(neigh))
    owner = np.repeat(np.arange(len(anchors)), counts)
    nb = np.concatenate([np.asarray(x, dtype=np.int64) for x in neigh])
    d = pos[nb] - anchors[owner]
    d2 = np.einsum("ij,ij->i", d, d)
    w = np.exp(-d2 / params.tau_enc)
    acc = np.stack([np.bincount(owner, w * nrm[nb, c], minlength=len(anchors)) for c in range(3)], axis=1)
    norm = np.linalg.norm(acc, axis=1)
    ok = norm > 1e-12
    normals = np.where(ok[:, None], acc / np.where(ok, norm, 1.0)[:, None], nrm[idx])
    others = d2 > 0
    n_other = np.bincount(owner, others, minlength=len(anchors))
    dist_sum = np.bincount(owner, np.where(others, np.sqrt(d2), 0.0), minlength=len(anchors))
    local_r = np.where(n_other > 0, dist_sum / np.maximum(n_other, 1), 0.0)

    feats = np.zeros((params.n_tok, FEATURE_WIDTH))
    feats[:, :3] = anchors
    feats[:, 3:6] = normals
    feats[:, 6] = local_r
    return TokenSet(np.arange(params.n_tok), feats, params)


def decode_sdf_batch(tokens: TokenSet, queries: np.ndarray) -> np.ndarray:
    if len(tokens) == 0:
        raise ValueError("cannot decode an empty token set")
    q = np.asarray(queries, dtype=np.float64).reshape(-1, 3)
    vals = decode_sdf_batch_raw(tokens, q)
    far = np.isnan(vals)
    if far.any():
        # outside by convention: positive distance to the nearest anchor
        vals[far], _ = cKDTree(tokens.positions).query(q[far])
    return vals


def decode_sdf(tokens: TokenSet, query) -> float:
    """Blended local-plane signed distance at one point."""
    return float(decode_sdf_batch(tokens, np.asarray(query, dtype=np.float64).reshape(1, 3))[0])


def _token_box(tokens: TokenSet) -> BoundingBox:
    pos = tokens.positions
    return BoundingBox(pos.min(axis=0), pos.max(axis=0)).inflate(tokens.params.far_field_cutoff)


def decode_grid(tokens: TokenSet, resolution: int | None = None, cell_size: float | None = None) -> tuple[SdfGrid, np.ndarray]:
    """Decoded SDF on the token bounding box grown by the far-field cutoff, with
    a mask of samples that have a token within the cutoff.

    ``cell_size`` picks the resolution so the longest axis has cells no wider
    than that; otherwise ``resolution`` (default: the codec's) is used.
    """
    p = tokens.params
    box = _token_box(tokens)
    extent = np.maximum(box.size, 1e-6)
    if cell_size is not None:
        resolution = max(2, int(np.ceil(extent.max() / cell_size - 1e-9)) + 1)
    resolution = int(resolution or p.grid_resolution)
    pts = grid_points(box.min_corner, extent, resolution)
    vals = decode_sdf_batch_raw(tokens, pts)
    near = ~np.isnan(vals)
    if (~near).any():
        vals[~near], _ = cKDTree(tokens.positions).query(pts[~near])
    shape = (resolution,) * 3
    return SdfGrid(resolution, box.min_corner, extent, vals.reshape(shape)), near.reshape(shape)


def decode_sdf_batch_raw(tokens: TokenSet, queries: np.ndarray) -> np.ndarray:
    """Blended values with NaN where no token lies within the cutoff."""
    p = tokens.params
    return kernels.blend_sdf(queries, tokens.positions, tokens.normals, p.far_field_cutoff, p.tau_dec)


def full_grid_spacing(tokens: TokenSet, resolution: int | None = None) -> float:
    """Largest cell width of the grid ``decode_mesh(tokens, resolution)`` uses."""
    res = int(resolution or tokens.params.grid_resolution)
    return float(np.maximum(_token_box(tokens).size, 1e-6).max() / (res - 1))


def decode_mesh(tokens: TokenSet, resolution: int | None = None, cell_size: float | None = None) -> TriangleMesh:
    """Marching cubes over the decoded field; cells touching far-field samples
    are skipped so the outside-by-convention jump never produces a surface."""
    if len(tokens) == 0:
        return TriangleMesh.empty()
    grid, near = decode_grid(tokens, resolution, cell_size)
    return marching_cubes(grid, 0.0, mask=near)


def tokens_in_box(tokens: TokenSet, box: BoundingBox) -> np.ndarray:
    """Sorted ids of tokens whose anchor lies in the closed box."""
    return np.sort(tokens.ids[box.contains(tokens.positions)])


def write_token_archive(tokens: TokenSet, path: str | Path) -> tuple[Path, Path]:
    """JSON header ``<path>.json`` plus little-endian float32 matrix ``<path>.bin``
    with one row per token in id order."""
    base = Path(path)
    if base.suffix in (".json", ".bin"):
        base = base.with_suffix("")
    ts = tokens.sorted()
    header = {
        "format": ARCHIVE_FORMAT,
        "version": ARCHIVE_VERSION,
        "count": len(ts),
        "feature_width": int(ts.features.shape[1]),
        "fields": FIELD_LAYOUT[: ts.features.shape[1]],
        "dtype": "float32",
        "endianness": "little",
        "ids": [int(i) for i in ts.ids],
        "params": asdict(ts.params),
        "data_file": base.with_suffix(".bin").name,
    }
    json_path, bin_path = base.with_suffix(".json"), base.with_suffix(".bin")
    json_path.write_text(json.dumps(header, indent=2, sort_keys=True) + "\n")
    bin_path.write_bytes(ts.features.astype("<f4").tobytes())
    return json_path, bin_path


def read_token_archive(path: str | Path) -> TokenSet:
    base = Path(path)
    if base.suffix in (".json", ".bin"):
        base = base.with_suffix("")
    header = json.loads(base.with_suffix(".json").read_text())
    if header.get("format") != ARCHIVE_FORMAT:
        raise ValueError("not a token archive")
    if header.get("endianness") != "little" or header.get("dtype") != "float32":
        raise ValueError("unsupported token archive encoding")
    n, c = int(header["count"]), int(header["feature_width"])
    raw = (base.parent / header["data_file"]).read_bytes()
    if len(raw) != 4 * n * c:
        raise ValueError("token archive size mismatch")
    feats = np.frombuffer(raw, dtype="<f4").reshape(n, c).astype(np.float64)
    return TokenSet(np.asarray(header["ids"], dtype=np.int64), feats, CodecParams.from_dict(header["params"]))
