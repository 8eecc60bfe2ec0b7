"""Token-space RePaint editing with drift-aware pruning.

Time runs from noise (t = 1) to data (t = 0) along v_t = (1 - t) clean + t eps.
Editable tokens follow the backbone's velocity; preserved tokens are re-noised
along their own known path every step, so at t = 0 they are exactly clean.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .backbone import Condition, SyntheticBackbone
from .codec import CodecParams, TokenSet, encode
from .errors import ValidationError
from .geometry import ImageGrid, TriangleMesh, ViewSpec, sample_surface
from .select import AttentionRecord, Selection, SelectParams, token_gating, token_seeding

PROBE_TIMESTEPS = (0.9, 0.7, 0.5, 0.3, 0.1)


@dataclass(frozen=True, eq=False)
class EditRequest:
    source_mesh: TriangleMesh
    source_view: Condition
    target_view: Condition
    mask: ImageGrid
    source_tokens: TokenSet | None = None

    def __post_init__(self):
        if self.source_view.view != self.target_view.view:
            raise ValidationError("source and target conditions must share a view", "view_mismatch")
        n = self.source_view.view.image_size
        if (self.mask.height, self.mask.width, self.mask.channels) != (n, n, 1):
            raise ValidationError(
                f"mask is {self.mask.height}x{self.mask.width}x{self.mask.channels}, expected {n}x{n}x1", "mask_shape"
            )
        if not self.mask.is_binary():
            raise ValidationError("mask must contain only 0 and 1", "mask_values")


@dataclass(frozen=True)
class EditConfig:
    t_repaint: float = 0.7
    t_pruning: float = 0.6
    n_steps: int = 50
    seed: int = 0
    select: SelectParams = field(default_factory=SelectParams)
    fixed_matching: bool = False
    noise_scale: float = 0.15
    prune: bool = True
    probe_timesteps: tuple[float, ...] = PROBE_TIMESTEPS

    def __post_init__(self):
        if not 0 < self.t_pruning <= self.t_repaint <= 1:
            raise ValidationError("need 0 < t_pruning <= t_repaint <= 1", "config")
        if self.n_steps < 2:
            raise ValidationError("n_steps must be >= 2", "config")
        if not self.noise_scale > 0:
            raise ValidationError("noise_scale must be positive", "config")
        if not self.probe_timesteps or any(not 0 < t <= 1 for t in self.probe_timesteps):
            raise ValidationError("probe timesteps must lie in (0, 1]", "config")

    @property
    def repaint_step_index(self) -> int:
        return max(1, min(self.n_steps, round(self.t_repaint * self.n_steps)))

    @property
    def pruning_step_index(self) -> int:
        """Grid index k of the pruning time k / n_steps, snapped to the nearest
        grid point no later than t_repaint."""
        return max(1, min(self.repaint_step_index, round(self.t_pruning * self.n_steps)))

    def to_dict(self) -> dict:
        return {
            "t_repaint": self.t_repaint,
            "t_pruning": self.t_pruning,
            "n_steps": self.n_steps,
            "seed": self.seed,
            "select": vars(self.select).copy(),
            "fixed_matching": self.fixed_matching,
            "noise_scale": self.noise_scale,
            "prune": self.prune,
            "probe_timesteps": list(self.probe_timesteps),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EditConfig":
        kw = {k: d[k] for k in cls.__dataclass_fields__ if k in d}
        if "select" in kw:
            kw["select"] = SelectParams.from_dict(kw["select"])
        if "probe_timesteps" in kw:
            kw["probe_timesteps"] = tuple(float(t) for t in kw["probe_timesteps"])
        return cls(**kw)


@dataclass(frozen=True, eq=False)
class EditState:
    t: float
    edit_tokens: TokenSet
    preserved_tokens: TokenSet
    preserved_noise: np.ndarray
    edit_ids: np.ndarray
    attention_record: AttentionRecord | None = None

    def __post_init__(self):
        if np.intersect1d(self.edit_tokens.ids, self.preserved_tokens.ids).size:
            raise ValueError("edit and preserved ids overlap")
        if self.preserved_noise.shape != self.preserved_tokens.features.shape:
            raise ValueError("preserved noise does not match preserved tokens")

    def preserved_at(self, t: float) -> TokenSet:
        return self.preserved_tokens.with_features(noise_interpolate(self.preserved_tokens.features, self.preserved_noise, t))

    def current(self) -> TokenSet:
        """V_RP at the state's time: editable rows first, then preserved."""
        return TokenSet.concat(self.edit_tokens, self.preserved_at(self.t))


@dataclass(frozen=True, eq=False)
class Decomposition:
    edit_ids: np.ndarray
    preserved_ids: np.ndarray
    seeding: Selection | None = None
    gating: Selection | None = None

    def __iter__(self):
        yield self.edit_ids
        yield self.preserved_ids


@dataclass(eq=False)
class EditTrace:
    """Diagnostics gathered during a run."""

    rows: list[tuple[float, int, float]] = field(default_factory=list)
    snapshots: list[tuple[float, np.ndarray, np.ndarray]] = field(default_factory=list)
    keep_snapshots: bool = False
    decomposition: Decomposition | None = None
    pruned_ids: np.ndarray | None = None
    prune_selections: tuple[Selection, Selection] | None = None

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "n_edit", "mean_drift"])
            for t, n, d in self.rows:
                w.writerow([f"{t:.6f}", n, f"{d:.9f}"])


def noise_interpolate(clean: np.ndarray, eps: np.ndarray, t: float) -> np.ndarray:
    clean = np.asarray(clean, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if clean.shape != eps.shape:
        raise ValueError(f"shape mismatch {clean.shape} vs {eps.shape}")
    if not 0 <= t <= 1:
        raise ValueError("t must lie in [0, 1]")
    # endpoints returned verbatim so signed zeros survive bit-exactly
    if t == 0:
        return clean.copy()
    if t == 1:
        return eps.copy()
    return (1.0 - t) * clean + t * eps


def _rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), stream]))


def _backbone_for(backbone, config: EditConfig):
    if config.fixed_matching and hasattr(backbone, "with_fixed_matching"):
        return backbone.with_fixed_matching(True)
    return backbone


def source_tokens(request: EditRequest, params: CodecParams | None = None, seed: int = 0) -> TokenSet:
    if request.source_tokens is not None:
        return request.source_tokens
    if request.source_view.target_tokens is not None:
        return request.source_view.target_tokens
    params = params or CodecParams()
    return encode(sample_surface(request.source_mesh, params.n_surf, seed), params, seed)


def probe_record(tokens: TokenSet, cond: Condition, backbone, config: EditConfig) -> AttentionRecord:
    """Attention on noise-interpolated copies of ``tokens`` at the probe times."""
    rng = _rng(config.seed, 1)
    rec = AttentionRecord(tokens.ids)
    for t in config.probe_timesteps:
        eps = config.noise_scale * rng.standard_normal(tokens.features.shape)
        noisy = tokens.with_features(noise_interpolate(tokens.features, eps, t))
        out = backbone.forward(noisy, cond, t, attention=True, attention_dtype=np.float32)
        rec.append(t, out.cross_attention, out.self_attention)
    return rec


def decompose(tokens: TokenSet, request: EditRequest, backbone, config: EditConfig) -> Decomposition:
    """Editable ids = gating(seeding(mask)) on the source condition."""
    if not request.mask.pixels.any():
        return Decomposition(np.zeros(0, dtype=np.int64), np.sort(tokens.ids))
    cond = request.source_view
    if cond.target_tokens is None:
        cond = Condition(cond.image, cond.view, tokens)
    rec = probe_record(tokens, cond, _backbone_for(backbone, config), config)
    seeded = token_seeding(tokens, rec, request.mask, config.select)
    gated = token_gating(tokens, rec, seeded.ids, config.select)
    edit_ids = gated.ids
    return Decomposition(edit_ids, np.setdiff1d(tokens.ids, edit_ids), seeded, gated)


def initial_state(tokens: TokenSet, edit_ids, config: EditConfig) -> EditState:
    eps = config.noise_scale * _rng(config.seed, 0).standard_normal(tokens.features.shape)
    order = np.argsort(tokens.ids, kind="stable")
    ts = TokenSet(tokens.ids[order], tokens.features[order], tokens.params)
    eps = eps[order]
    is_edit = np.isin(ts.ids, np.asarray(edit_ids, dtype=np.int64))
    t0 = config.repaint_step_index / config.n_steps
    edit = TokenSet(ts.ids[is_edit], noise_interpolate(ts.features[is_edit], eps[is_edit], t0), ts.params)
    pres = TokenSet(ts.ids[~is_edit], ts.features[~is_edit], ts.params)
    return EditState(t0, edit, pres, eps[~is_edit], edit.ids.copy())


def repaint_step(
    state: EditState,
    backbone,
    cond_e: Condition,
    dt: float,
    record: bool = False,
    t_next: float | None = None,
):
    """One Euler step of the editable branch under full-context prediction.

    Returns ``(new_state, endpoint_estimate_of_edit_rows)``. With ``record``
    the step's attention maps are appended to the state's record.
    """
    if state.t < dt - 1e-12:
        raise ValueError(f"cannot step by {dt} from t={state.t}")
    t_next = max(0.0, state.t - dt) if t_next is None else t_next
    n_e = len(state.edit_tokens)
    rec = state.attention_record
    x0 = np.zeros((0, state.edit_tokens.features.shape[1]))
    new_edit = state.edit_tokens
    if n_e or record:
        full = state.current()
        out = backbone.forward(full, cond_e, state.t, attention=record, attention_dtype=np.float32)
        if record:
            if rec is None:
                rec = AttentionRecord(full.ids)
            rec.append(state.t, out.cross_attention, out.self_attention)
        if n_e:
            new_edit = state.edit_tokens.with_features(state.edit_tokens.features - dt * out.velocity[:n_e])
            x0 = out.endpoint[:n_e]
    return replace(state, t=t_next, edit_tokens=new_edit, attention_record=rec), x0


def prune_set(edit_ids, conflict_ids, cond_ids) -> np.ndarray:
    """E \\ (C \\ S) as a sorted id array."""
    e = np.asarray(edit_ids, dtype=np.int64)
    drop = np.setdiff1d(np.asarray(conflict_ids, dtype=np.int64), np.asarray(cond_ids, dtype=np.int64))
    return np.sort(e[~np.isin(e, drop)])


def drift_prune(state: EditState, backbone, request: EditRequest, config: EditConfig, trace: EditTrace | None = None) -> EditState:
    """Delete editable tokens gated toward the preserved set without mask support."""
    if len(state.edit_tokens) == 0:
        return state
    rec = state.attention_record
    if rec is None or len(rec) == 0:
        # no steps recorded yet: take the current prediction as evidence
        state, _ = repaint_step(state, backbone, request.target_view, 0.0, record=True, t_next=state.t)
        rec = state.attention_record
    full = state.current()
    cond = token_seeding(full, rec, request.mask, config.select)
    conflict = token_gating(full, rec, state.preserved_tokens.ids, config.select)
    keep = prune_set(state.edit_tokens.ids, conflict.ids, cond.ids)
    if trace is not None:
        trace.pruned_ids = np.setdiff1d(state.edit_tokens.ids, keep)
        trace.prune_selections = (cond, conflict)
    if len(keep) == len(state.edit_tokens):
        return state
    return replace(state, edit_tokens=state.edit_tokens.subset(keep), edit_ids=keep)


def vecset_edit(
    request: EditRequest,
    config: EditConfig,
    backbone=None,
    tokens: TokenSet | None = None,
    trace: EditTrace | None = None,
    decomposition: Decomposition | None = None,
) -> TokenSet:
    """Decompose, repaint from t_repaint to 0, prune once at t_pruning.

    Returns the edited token set in id order.
    """
    backbone = _backbone_for(backbone or SyntheticBackbone(), config)
    if request.target_view.target_tokens is None and isinstance(backbone, SyntheticBackbone):
        raise ValidationError("target condition needs target tokens for the synthetic backbone", "missing_target")
    tokens = tokens if tokens is not None else source_tokens(request, seed=config.seed)
    dec = decomposition or decompose(tokens, request, backbone, config)
    if trace is not None:
        trace.decomposition = dec
    state = initial_state(tokens, dec.edit_ids, config)
    n = config.n_steps
    k_prune = config.pruning_step_index if config.prune else -1
    source_pos = dict(zip(tokens.ids.tolist(), tokens.positions))
    for k in range(config.repaint_step_index, 0, -1):
        pending = config.prune and k > k_prune and len(state.edit_tokens) > 0
        t = state.t
        state, x0 = repaint_step(state, backbone, request.target_view, 1.0 / n, record=pending, t_next=(k - 1) / n)
        if trace is not None:
            ids = state.edit_tokens.ids
            drift = float(np.mean([np.linalg.norm(x0[i, :3] - source_pos[j]) for i, j in enumerate(ids)])) if len(ids) else 0.0
            trace.rows.append((t, len(ids), drift))
            if trace.keep_snapshots:
                pres = state.preserved_tokens.positions
                trace.snapshots.append((t, x0[:, :3].copy(), pres))
        if k - 1 == k_prune:
            state = drift_prune(state, backbone, request, config, trace)
            state = replace(state, attention_record=None)
    out = TokenSet.concat(state.edit_tokens, state.preserved_at(0.0))
    return out.sorted()


def anchor_scatter(edit_points: np.ndarray, preserved_points: np.ndarray, view: ViewSpec) -> ImageGrid:
    """Orthographic dot plot: preserved anchors grey, editable endpoint estimates red."""
    n = view.image_size
    img = np.ones((n, n, 3))
    for pts, color in ((preserved_points, (0.6, 0.6, 0.6)), (edit_points, (0.85, 0.1, 0.1))):
        if len(pts) == 0:
            continue
        uv, _ = view.project(pts)
        px = np.floor(uv * n).astype(np.int64)
        ok = ((px >= 0) & (px < n)).all(axis=1)
        img[px[ok, 1], px[ok, 0]] = color
    return ImageGrid(img)
