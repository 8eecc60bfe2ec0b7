"""Token localization from attention statistics: seeding, gating, thresholds."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .codec import TokenSet
from .geometry import ImageGrid


@dataclass(frozen=True)
class SelectParams:
    alpha_I: float = 0.7
    alpha_A: float = 0.5
    top_k_layers: int = 2
    top_fraction: float = 0.10
    kl_epsilon: float = 1e-12

    def __post_init__(self):
        for name in ("alpha_I", "alpha_A"):
            if not 0 < getattr(self, name) <= 1:
                raise ValueError(f"{name} must lie in (0, 1]")
        if not 0 < self.top_fraction <= 1:
            raise ValueError("top_fraction must lie in (0, 1]")
        if self.top_k_layers < 1:
            raise ValueError("top_k_layers must be >= 1")
        if not self.kl_epsilon > 0:
            raise ValueError("kl_epsilon must be positive")

    @classmethod
    def from_dict(cls, d: dict) -> "SelectParams":
        return cls(**{k: d[k] for k in cls.__dataclass_fields__ if k in d})


@dataclass(eq=False)
class AttentionRecord:
    """Attention maps over timesteps; rows follow ``ids``.

    ``cross[k][l]`` is (n_tok, H*W) and ``self_attn[k][l]`` is (n_tok, n_tok)
    for timestep ``timesteps[k]`` and layer ``l``.
    """

    ids: np.ndarray
    cross: list[list[np.ndarray]] = field(default_factory=list)
    self_attn: list[list[np.ndarray]] = field(default_factory=list)
    timesteps: list[float] = field(default_factory=list)

    def __post_init__(self):
        self.ids = np.asarray(self.ids, dtype=np.int64).reshape(-1)

    @property
    def n_layers(self) -> int:
        return len(self.cross[0]) if self.cross else 0

    def __len__(self) -> int:
        return len(self.timesteps)

    def append(self, t: float, cross: list[np.ndarray], self_attn: list[np.ndarray]) -> None:
        n = len(self.ids)
        if self.cross and len(cross) != self.n_layers:
            raise ValueError("layer count changed within a record")
        if any(a.shape[0] != n for a in cross) or any(a.shape != (n, n) for a in self_attn):
            raise ValueError("attention rows do not match record ids")
        self.cross.append(list(cross))
        self.self_attn.append(list(self_attn))
        self.timesteps.append(float(t))


@dataclass(frozen=True, eq=False)
class Selection:
    ids: np.ndarray
    scores: np.ndarray
    score_ids: np.ndarray
    threshold: float
    layers_used: tuple[int, ...]

    def to_dict(self) -> dict:
        return {
            "selected_ids": [int(i) for i in self.ids],
            "score_ids": [int(i) for i in self.score_ids],
            "scores": [float(s) for s in self.scores],
            "threshold": float(self.threshold),
            "layers_used": list(self.layers_used),
        }

    def dump(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


def _mask_vector(mask: ImageGrid, width: int) -> np.ndarray:
    if not mask.is_binary():
        raise ValueError("mask must be binary")
    m = mask.flat_mask()
    if len(m) != width:
        raise ValueError(f"mask has {len(m)} pixels, attention maps have {width}")
    return m


def mask_alignment_scores(record: AttentionRecord, mask: ImageGrid, layers) -> np.ndarray:
    """Mean over (layer, timestep) of each token's attention mass on the mask."""
    layers = list(layers)
    if not record.cross or not layers:
        raise ValueError("no attention maps to score")
    m = _mask_vector(mask, record.cross[0][0].shape[1])
    acc = np.zeros(len(record.ids))
    for maps in record.cross:
        for l in layers:
            acc += maps[l] @ m
    return acc / (len(layers) * len(record.cross))


def kl_rows_to_marginal(a: np.ndarray, eps: float) -> float:
    """Sum over rows of KL(row || column-mean), with eps flooring inside logs."""
    a = np.asarray(a)
    if a.ndim == 2 and a.strides[0] == 0:
        return 0.0  # broadcast of one row: every row equals the marginal
    if a.dtype != np.float32:
        a = a.astype(np.float64, copy=False)
    marginal = a.mean(axis=0, dtype=np.float64)
    floor = a.dtype.type(eps) if eps >= np.finfo(a.dtype).tiny else np.finfo(a.dtype).tiny
    self_term = np.sum(a * np.log(np.maximum(a, floor)), dtype=np.float64)
    # a == 0 entries contribute nothing to either term
    cross_term = float(a.sum(axis=0, dtype=np.float64) @ np.log(np.maximum(marginal, eps)))
    return float(self_term) - cross_term


def layer_informativeness(record: AttentionRecord, eps: float = 1e-12) -> np.ndarray:
    """Per-layer KL of attention rows to the (normalized) column marginal,
    summed over rows and timesteps."""
    d = np.zeros(record.n_layers)
    for maps in record.cross:
        for l, a in enumerate(maps):
            d[l] += kl_rows_to_marginal(a, eps)
    return d


def select_layers(d, k: int) -> tuple[int, ...]:
    d = np.asarray(d, dtype=np.float64)
    if k > len(d):
        raise ValueError("K exceeds the number of layers")
    order = sorted(range(len(d)), key=lambda l: (-d[l], l))
    return tuple(sorted(order[:k]))


def top_count(n: int, fraction: float) -> int:
    # tolerate representation error, e.g. 0.1 * 30 = 3.0000000000000004
    return max(1, math.ceil(fraction * n - 1e-9))


def adaptive_threshold(scores, alpha: float, top_fraction: float) -> float:
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    if len(s) == 0:
        raise ValueError("no scores")
    k = top_count(len(s), top_fraction)
    top = np.partition(s, len(s) - k)[len(s) - k :]
    return float(alpha * top.mean())


def _aligned(tokens: TokenSet, record: AttentionRecord) -> None:
    if len(tokens) != len(record.ids) or not np.array_equal(np.sort(tokens.ids), np.sort(record.ids)):
        raise ValueError("token set and attention record cover different ids")


def token_seeding(tokens: TokenSet, record: AttentionRecord, mask: ImageGrid, params: SelectParams | None = None) -> Selection:
    params = params or SelectParams()
    _aligned(tokens, record)
    layers = select_layers(layer_informativeness(record, params.kl_epsilon), params.top_k_layers)
    scores = mask_alignment_scores(record, mask, layers)
    tau = adaptive_threshold(scores, params.alpha_I, params.top_fraction)
    chosen = np.sort(record.ids[scores > tau])
    return Selection(chosen, scores, record.ids.copy(), tau, layers)


def gating_scores(record: AttentionRecord, ref_ids) -> np.ndarray:
    ref = np.isin(record.ids, np.asarray(ref_ids, dtype=np.int64)).astype(np.float64)
    acc, count = np.zeros(len(record.ids)), 0
    for maps in record.self_attn:
        for a in maps:
            acc += a @ ref
            count += 1
    if count == 0:
        raise ValueError("no self-attention maps to score")
    return acc / count


def token_gating(tokens: TokenSet, record: AttentionRecord, ref_ids, params: SelectParams | None = None) -> Selection:
    params = params or SelectParams()
    _aligned(tokens, record)
    ref_ids = np.asarray(ref_ids, dtype=np.int64).reshape(-1)
    if not np.isin(ref_ids, record.ids).all():
        raise ValueError("reference set contains unknown token ids")
    scores = gating_scores(record, ref_ids)
    tau = adaptive_threshold(scores, params.alpha_A, params.top_fraction)
    chosen = np.sort(record.ids[scores > tau])
    return Selection(chosen, scores, record.ids.copy(), tau, tuple(range(record.n_layers)))
