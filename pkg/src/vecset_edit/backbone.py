"""Synthetic stand-in for the diffusion transformer consumed by the editor.

The backbone knows the clean endpoint of the trajectory (``target_tokens`` on
the condition) and returns the exact rectified-flow velocity toward each
token's matched target, together with layered attention maps computed from
kernels on the model's endpoint estimate ``x0 = v_t - t * u``.

Interface contract for a real model: ``forward(tokens_t, cond, t, params)``
returns a :class:`BackboneOutput` whose velocity rows align with the rows of
``tokens_t`` and whose attention matrices are row-stochastic with one row per
token. Nothing else in the package depends on the synthetic internals.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .codec import TokenSet
from .geometry import ImageGrid, ViewSpec


@dataclass(frozen=True, eq=False)
class Condition:
    image: ImageGrid
    view: ViewSpec
    target_tokens: TokenSet | None = None

    def __post_init__(self):
        n = self.view.image_size
        if (self.image.height, self.image.width) != (n, n):
            raise ValueError(f"condition image is {self.image.height}x{self.image.width}, view expects {n}x{n}")


@dataclass(frozen=True)
class BackboneParams:
    n_layers: int = 4
    cross_bandwidths: tuple[float, ...] = (0.002, 0.008, 0.05, math.inf)
    self_bandwidth: float = 0.01
    visibility_sharpness: float = 4.0
    cfg_scale: float = 10.0  # accepted for interface parity; the synthetic model ignores it
    fixed_matching: bool = False

    def __post_init__(self):
        bw = tuple(float(b) for b in self.cross_bandwidths)
        object.__setattr__(self, "cross_bandwidths", bw)
        if self.n_layers < 1:
            raise ValueError("n_layers must be >= 1")
        if len(bw) != self.n_layers:
            raise ValueError("need one cross bandwidth per layer")
        if any(not b > 0 for b in bw) or not self.self_bandwidth > 0:
            raise ValueError("bandwidths must be positive or inf")
        if self.visibility_sharpness < 0:
            raise ValueError("visibility_sharpness must be >= 0")

    def to_dict(self) -> dict:
        return {
            "n_layers": self.n_layers,
            "cross_bandwidths": ["inf" if math.isinf(b) else b for b in self.cross_bandwidths],
            "self_bandwidth": self.self_bandwidth,
            "visibility_sharpness": self.visibility_sharpness,
            "cfg_scale": self.cfg_scale,
            "fixed_matching": self.fixed_matching,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BackboneParams":
        kw = {k: d[k] for k in cls.__dataclass_fields__ if k in d}
        if "cross_bandwidths" in kw:
            kw["cross_bandwidths"] = tuple(float(b) for b in kw["cross_bandwidths"])
            kw.setdefault("n_layers", len(kw["cross_bandwidths"]))
        return cls(**kw)


def write_descriptor(params: BackboneParams, path: str | Path) -> None:
    Path(path).write_text(json.dumps({"backbone": "synthetic", **params.to_dict()}, indent=2, sort_keys=True) + "\n")


def read_descriptor(path: str | Path) -> BackboneParams:
    d = json.loads(Path(path).read_text())
    if d.get("backbone", "synthetic") != "synthetic":
        raise ValueError(f"unsupported backbone {d['backbone']!r}")
    return BackboneParams.from_dict(d)


@dataclass(frozen=True, eq=False)
class BackboneOutput:
    velocity: np.ndarray
    cross_attention: list[np.ndarray]
    self_attention: list[np.ndarray]
    endpoint: np.ndarray | None = None


def _row_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    np.exp(z, out=z)
    z /= z.sum(axis=1, keepdims=True)
    return z


def _unit(n: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(n, axis=1, keepdims=True)
    return np.where(norm > 1e-12, n / np.maximum(norm, 1e-300), 0.0)


def cross_attention_from_anchors(positions, normals, view: ViewSpec, params: BackboneParams, dtype=np.float64) -> list[np.ndarray]:
    """Token-to-pixel maps from projected anchors.

    Each row mixes a Gaussian kernel around the anchor's projection with a
    uniform background row. The kernel carries logit ``s * max(0, n.d)`` and
    the background logit 0, so back-facing tokens end up half-detached from
    the image while camera-facing ones attend almost purely to their pixel.
    """
    positions = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
    n_tok, hw = len(positions), view.image_size**2
    uv, _ = view.project(positions)
    pix = view.pixel_centers()
    d2 = (
        (uv * uv).sum(axis=1)[:, None]
        - 2.0 * uv @ pix.T
        + (pix * pix).sum(axis=1)[None, :]
    )
    np.maximum(d2, 0.0, out=d2)
    vis = np.maximum(0.0, _unit(np.asarray(normals, dtype=np.float64).reshape(-1, 3)) @ view.view_dir)
    background = 1.0 / (1.0 + np.exp(params.visibility_sharpness * vis))
    # shift by the row minimum once; every layer's softmax is then exp(-shifted / b)
    d2 -= d2.min(axis=1, keepdims=True)
    shifted = d2.astype(dtype, copy=False)
    keep = (1.0 - background).astype(dtype)[:, None]
    floor = (background / hw).astype(dtype)[:, None]
    maps = []
    for b in params.cross_bandwidths:
        if math.isinf(b):
            # read-only broadcast: the uniform layer costs no memory in records
            maps.append(np.broadcast_to(np.asarray(1.0 / hw, dtype=dtype), (n_tok, hw)))
            continue
        a = np.exp(shifted * dtype(-1.0 / b))
        a *= keep / a.sum(axis=1, keepdims=True, dtype=np.float64).astype(dtype)
        a += floor
        maps.append(a)
    return maps


def self_attention_from_anchors(positions, params: BackboneParams) -> list[np.ndarray]:
    p = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
    sq = (p * p).sum(axis=1)
    d2 = np.maximum(sq[:, None] - 2.0 * p @ p.T + sq[None, :], 0.0)
    np.fill_diagonal(d2, 0.0)
    a = _row_softmax(-d2 / params.self_bandwidth)
    # the kernel is shared by all layers
    return [a] * params.n_layers


def cross_attention_maps(tokens: TokenSet, cond: Condition, params: BackboneParams) -> list[np.ndarray]:
    return cross_attention_from_anchors(tokens.positions, tokens.normals, cond.view, params)


def self_attention_maps(tokens: TokenSet, params: BackboneParams) -> list[np.ndarray]:
    return self_attention_from_anchors(tokens.positions, params)


def match_targets(positions: np.ndarray, targets: np.ndarray, t: float, chunk: int = 256) -> np.ndarray:
    """Index of the target whose remaining clean path passes nearest.

    Target j's noise-free trajectory visits (1 - s) * p_j for s in [0, t]
    before reaching the endpoint, so a token at time t is compared against
    that segment. A token sitting on a target matches it; as t -> 0 this
    reduces to plain nearest-anchor matching. Ties go to the lower index.
    """
    x = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
    b = np.asarray(targets, dtype=np.float64).reshape(-1, 3)
    a = (1.0 - t) * b
    seg = b - a
    seg2 = (seg * seg).sum(axis=1)
    safe = np.where(seg2 > 0, seg2, 1.0)
    out = np.empty(len(x), dtype=np.int64)
    for lo in range(0, len(x), chunk):
        xs = x[lo : lo + chunk]
        rel = xs[:, None, :] - a[None, :, :]
        s = np.clip(np.einsum("ijk,jk->ij", rel, seg) / safe, 0.0, 1.0)
        s[:, seg2 == 0] = 0.0
        diff = rel - s[:, :, None] * seg[None, :, :]
        out[lo : lo + chunk] = np.argmin(np.einsum("ijk,ijk->ij", diff, diff), axis=1)
    return out


def _matched_rows(tokens_t: TokenSet, target: TokenSet, t: float, fixed: bool) -> np.ndarray:
    if fixed:
        # pair by id; ids without a counterpart fall back to the nearest path
        rows = np.full(len(tokens_t), -1, dtype=np.int64)
        present = np.isin(tokens_t.ids, target.ids)
        if present.any():
            rows[present] = target.index_of(tokens_t.ids[present])
        if (~present).any():
            rows[~present] = match_targets(tokens_t.positions[~present], target.positions, t)
        return rows
    return match_targets(tokens_t.positions, target.positions, t)


def _check_time(t: float) -> None:
    if not t > 0:
        raise ValueError("velocity undefined at t=0")
    if t > 1:
        raise ValueError("t must lie in (0, 1]")


def _target_of(cond: Condition, tokens_t: TokenSet) -> TokenSet:
    target = cond.target_tokens
    if target is None:
        raise ValueError("synthetic backbone needs condition target_tokens")
    if len(target) == 0:
        raise ValueError("condition target_tokens is empty")
    if target.features.shape[1] != tokens_t.features.shape[1]:
        raise ValueError("token feature widths differ")
    return target


def velocity(tokens_t: TokenSet, cond: Condition, t: float, params: BackboneParams | None = None) -> np.ndarray:
    """Rectified-flow velocity u = (v_t - v*_m) / t on the full feature vector."""
    _check_time(t)
    params = params or BackboneParams()
    target = _target_of(cond, tokens_t)
    if len(tokens_t) == 0:
        return np.zeros_like(tokens_t.features)
    rows = _matched_rows(tokens_t, target, t, params.fixed_matching)
    return (tokens_t.features - target.features[rows]) / t


def forward(
    tokens_t: TokenSet,
    cond: Condition,
    t: float,
    params: BackboneParams | None = None,
    attention: bool = True,
    attention_dtype=np.float64,
) -> BackboneOutput:
    """Velocity plus attention computed on the endpoint estimate x0 = v_t - t u.

    ``attention=False`` skips the maps for callers that do not record them.
    """
    params = params or BackboneParams()
    u = velocity(tokens_t, cond, t, params)
    x0 = tokens_t.features - t * u
    if not attention or len(tokens_t) == 0:
        return BackboneOutput(u, [], [], x0)
    cross = cross_attention_from_anchors(x0[:, :3], x0[:, 3:6], cond.view, params, attention_dtype)
    return BackboneOutput(u, cross, self_attention_from_anchors(x0[:, :3], params), x0)


@dataclass(frozen=True)
class SyntheticBackbone:
    """Immutable bundle of parameters behind the forward interface."""

    params: BackboneParams = field(default_factory=BackboneParams)

    def forward(self, tokens_t: TokenSet, cond: Condition, t: float, attention: bool = True, attention_dtype=np.float64) -> BackboneOutput:
        return forward(tokens_t, cond, t, self.params, attention, attention_dtype)

    def velocity(self, tokens_t: TokenSet, cond: Condition, t: float) -> np.ndarray:
        return velocity(tokens_t, cond, t, self.params)

    def with_fixed_matching(self, fixed: bool) -> "SyntheticBackbone":
        d = self.params.to_dict()
        d["fixed_matching"] = bool(fixed)
        return SyntheticBackbone(BackboneParams.from_dict(d))
