from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_tokens
from vecset_edit.backbone import BackboneParams, Condition, SyntheticBackbone
from vecset_edit.codec import TokenSet, decode_mesh, encode, tokens_in_box
from vecset_edit.edit import (
    EditConfig,
    EditRequest,
    EditState,
    EditTrace,
    anchor_scatter,
    decompose,
    drift_prune,
    initial_state,
    noise_interpolate,
    prune_set,
    repaint_step,
    vecset_edit,
)
from vecset_edit.errors import ValidationError
from vecset_edit.evaluation import sampled_chamfer
from vecset_edit.geometry import (
    BoundingBox,
    ImageGrid,
    PrimitiveScene,
    Sphere,
    ViewSpec,
    crop_mesh,
    crop_mesh_outside,
    render_view,
    sample_surface,
)
from vecset_edit.scenes import SPHERE_A, SPHERE_B, scene_mesh

VIEW = ViewSpec(0, 0, 16)
IMG = ImageGrid.zeros(16, 3)


def _box_of(sphere: Sphere, pad: float = 0.05) -> BoundingBox:
    c = np.asarray(sphere.center)
    return BoundingBox(c - sphere.radius - pad, c + sphere.radius + pad)


# noise interpolation


def test_noise_interpolate_examples():
    rng = np.random.default_rng(0)
    clean, eps = rng.normal(size=(4, 8)), rng.normal(size=(4, 8))
    assert np.array_equal(noise_interpolate(clean, eps, 0.0), clean)
    assert np.array_equal(noise_interpolate(clean, eps, 1.0), eps)
    assert np.all(noise_interpolate(np.zeros((2, 3)), np.full((2, 3), 2.0), 0.5) == 1.0)


def test_noise_interpolate_keeps_signed_zero():
    clean = np.array([[-0.0, 0.0]])
    out = noise_interpolate(clean, np.ones((1, 2)), 0.0)
    assert np.signbit(out[0, 0]) and not np.signbit(out[0, 1])


def test_noise_interpolate_validation():
    with pytest.raises(ValueError):
        noise_interpolate(np.zeros((2, 3)), np.zeros((3, 3)), 0.5)
    with pytest.raises(ValueError):
        noise_interpolate(np.zeros((2, 3)), np.zeros((2, 3)), 1.5)


# config and request


def test_step_snapping():
    assert EditConfig(t_repaint=0.7, t_pruning=0.6, n_steps=50).repaint_step_index == 35
    assert EditConfig(t_repaint=0.7, t_pruning=0.6, n_steps=50).pruning_step_index == 30
    # pruning time never lands after the repaint start
    assert EditConfig(t_repaint=0.5, t_pruning=0.49, n_steps=3).pruning_step_index <= 2
    assert EditConfig(t_repaint=0.01, t_pruning=0.01, n_steps=10).repaint_step_index == 1


@pytest.mark.parametrize("bad", [{"t_pruning": 0.8}, {"t_pruning": 0.0}, {"n_steps": 1}, {"noise_scale": 0}, {"probe_timesteps": (0.0,)}])
def test_config_validation(bad):
    with pytest.raises(ValidationError):
        EditConfig(**bad)


def test_config_round_trip():
    cfg = EditConfig(t_repaint=0.8, n_steps=20, seed=3, fixed_matching=True)
    assert EditConfig.from_dict(cfg.to_dict()) == cfg


def test_request_validation():
    tok = random_tokens(np.random.default_rng(0), 4)
    cond = Condition(IMG, VIEW, tok)
    mesh = scene_mesh(PrimitiveScene((SPHERE_A,)), 32)
    with pytest.raises(ValidationError) as e:
        EditRequest(mesh, cond, cond, ImageGrid.zeros(8))
    assert e.value.kind == "mask_shape"
    with pytest.raises(ValidationError) as e:
        EditRequest(mesh, cond, cond, ImageGrid(np.full((16, 16), 0.5)))
    assert e.value.kind == "mask_values"
    other = Condition(IMG, ViewSpec(90, 0, 16), tok)
    with pytest.raises(ValidationError) as e:
        EditRequest(mesh, cond, other, ImageGrid.zeros(16))
    assert e.value.kind == "view_mismatch"


# pruning algebra


def test_prune_set_examples():
    assert prune_set([1, 2, 3], [], [9]).tolist() == [1, 2, 3]
    assert prune_set([1, 2, 3], [2, 3], [2, 3]).tolist() == [1, 2, 3]
    assert prune_set([1, 2, 3], [2, 3, 7], [3]).tolist() == [1, 3]


@settings(max_examples=100, deadline=None)
@given(st.sets(st.integers(0, 30)), st.sets(st.integers(0, 30)), st.sets(st.integers(0, 30)))
def test_prune_set_matches_set_algebra(e, c, s):
    assert prune_set(sorted(e), sorted(c), sorted(s)).tolist() == sorted(e - (c - s))


# repaint steps


def _state(tokens: TokenSet, edit_ids, t: float, seed: int = 0) -> EditState:
    cfg = EditConfig(t_repaint=t, t_pruning=t, n_steps=10, seed=seed)
    return initial_state(tokens, edit_ids, cfg)


def test_repaint_without_edit_set_follows_schedule():
    rng = np.random.default_rng(0)
    tok = random_tokens(rng, 10)
    st0 = _state(tok, [], 0.5)
    st1, _ = repaint_step(st0, SyntheticBackbone(), Condition(IMG, VIEW, tok), 0.1)
    assert st1.t == pytest.approx(0.4)
    expect = noise_interpolate(st0.preserved_tokens.features, st0.preserved_noise, st1.t)
    assert np.array_equal(st1.current().features, expect)


def test_single_full_step_lands_on_target():
    rng = np.random.default_rng(1)
    tgt = random_tokens(rng, 8)
    src = tgt.with_features(rng.normal(size=tgt.features.shape))
    st0 = _state(src, src.ids, 1.0)
    bb = SyntheticBackbone(BackboneParams(fixed_matching=True))
    st1, x0 = repaint_step(st0, bb, Condition(IMG, VIEW, tgt), 1.0)
    assert st1.t == 0.0
    assert np.allclose(st1.edit_tokens.features, tgt.features, rtol=0, atol=1e-12)
    assert np.allclose(x0, tgt.features, rtol=0, atol=1e-12)


def test_step_larger_than_time_rejected():
    tok = random_tokens(np.random.default_rng(0), 3)
    with pytest.raises(ValueError):
        repaint_step(_state(tok, tok.ids, 0.2), SyntheticBackbone(), Condition(IMG, VIEW, tok), 0.5)


# full runs on small token sets


def _tiny_request(src: TokenSet, tgt: TokenSet, mask: ImageGrid) -> EditRequest:
    mesh = scene_mesh(PrimitiveScene((SPHERE_A,)), 24)
    return EditRequest(mesh, Condition(IMG, VIEW, src), Condition(IMG, VIEW, tgt), mask, src)


@pytest.mark.parametrize("n_steps", [10, 50])
def test_full_mask_fixed_matching_converges(n_steps):
    rng = np.random.default_rng(n_steps)
    src, tgt = random_tokens(rng, 30), random_tokens(rng, 30)
    cfg = EditConfig(t_repaint=1.0, t_pruning=1.0, n_steps=n_steps, fixed_matching=True, prune=False)
    dec = decompose(src, _tiny_request(src, tgt, ImageGrid(np.ones((16, 16)))), SyntheticBackbone(), cfg)
    out = vecset_edit(_tiny_request(src, tgt, ImageGrid(np.ones((16, 16)))), cfg, decomposition=type(dec)(src.ids, np.zeros(0, dtype=np.int64)))
    assert np.abs(out.features - tgt.sorted().features).max() < 1e-5


def test_empty_mask_is_identity():
    rng = np.random.default_rng(2)
    src, tgt = random_tokens(rng, 20), random_tokens(rng, 20)
    out = vecset_edit(_tiny_request(src, tgt, ImageGrid.zeros(16)), EditConfig(seed=5))
    assert np.array_equal(out.ids, src.sorted().ids)
    assert out.features.tobytes() == src.sorted().features.tobytes()


def test_decompose_empty_mask():
    rng = np.random.default_rng(3)
    src = random_tokens(rng, 12)
    e, p = decompose(src, _tiny_request(src, src, ImageGrid.zeros(16)), SyntheticBackbone(), EditConfig())
    assert len(e) == 0 and np.array_equal(p, np.sort(src.ids))


def test_missing_target_is_validation_error():
    rng = np.random.default_rng(3)
    src = random_tokens(rng, 12)
    req = EditRequest(
        scene_mesh(PrimitiveScene((SPHERE_A,)), 24), Condition(IMG, VIEW, src), Condition(IMG, VIEW), ImageGrid.zeros(16), src
    )
    with pytest.raises(ValidationError) as e:
        vecset_edit(req, EditConfig())
    assert e.value.kind == "missing_target"


def test_drift_prune_without_preserved_set_is_noop():
    rng = np.random.default_rng(4)
    src = random_tokens(rng, 10)
    req = _tiny_request(src, src, ImageGrid(np.ones((16, 16))))
    st0 = _state(src, src.ids, 0.5)
    trace = EditTrace()
    out = drift_prune(st0, SyntheticBackbone(), req, EditConfig(), trace)
    assert np.array_equal(out.edit_tokens.ids, st0.edit_tokens.ids)
    assert len(trace.pruned_ids) == 0


def test_run_is_deterministic():
    rng = np.random.default_rng(6)
    src, tgt = random_tokens(rng, 25), random_tokens(rng, 25)
    mask = np.zeros((16, 16))
    mask[4:12, 4:12] = 1
    req = _tiny_request(src, tgt, ImageGrid(mask))
    a = vecset_edit(req, EditConfig(seed=1, n_steps=10))
    b = vecset_edit(req, EditConfig(seed=1, n_steps=10))
    assert np.array_equal(a.ids, b.ids) and a.features.tobytes() == b.features.tobytes()


def test_anchor_scatter_draws_both_sets():
    img = anchor_scatter(np.array([[0.0, 0, 0]]), np.array([[0.5, 0.5, 0]]), VIEW).pixels
    assert np.any(np.all(img == (0.85, 0.1, 0.1), axis=2))
    assert np.any(np.all(img == (0.6, 0.6, 0.6), axis=2))


# two-sphere benchmark


@pytest.fixture(scope="module")
def bench_decomposition(bench):
    return decompose(bench.tokens, bench.request(), SyntheticBackbone(), EditConfig())


def test_decompose_leaves_sphere_b_alone(bench, bench_decomposition):
    b_ids = tokens_in_box(bench.tokens, _box_of(SPHERE_B))
    assert not set(bench_decomposition.edit_ids.tolist()) & set(b_ids.tolist())


def test_seeding_precision_on_sphere_a(bench):
    sil = render_view(scene_mesh(PrimitiveScene((SPHERE_A,))), bench.view, "silhouette")
    dec = decompose(bench.tokens, bench.request(mask=sil), SyntheticBackbone(), EditConfig())
    on_a = set(tokens_in_box(bench.tokens, _box_of(SPHERE_A)).tolist())
    chosen = dec.seeding.ids.tolist()
    assert chosen and np.mean([i in on_a for i in chosen]) >= 0.9


@pytest.fixture(scope="module")
def one_object():
    mesh = scene_mesh(PrimitiveScene((Sphere((0, 0, 0), 0.5),)))
    tok = encode(sample_surface(mesh, 20000, 0), seed=0)
    view = ViewSpec(0, 0, 64)
    cond = Condition(render_view(mesh, view), view, tok)
    req = EditRequest(mesh, cond, cond, render_view(mesh, view, "silhouette"), tok)
    dec = decompose(tok, req, SyntheticBackbone(), EditConfig())
    return tok, view, dec


def test_full_silhouette_covers_front_tokens(one_object):
    """Specified target: >= 90% of front-facing tokens. Known shortfall, see the
    decisions ledger: rim tokens attend partly to the background and stay below
    the 0.7 x top-mean threshold."""
    tok, view, dec = one_object
    front = tok.ids[tok.normals @ view.view_dir > 0]
    chosen = set(dec.edit_ids.tolist())
    assert np.mean([i in chosen for i in front]) >= 0.9


def test_full_silhouette_covers_camera_facing_core(one_object):
    tok, view, dec = one_object
    nd = tok.normals @ view.view_dir
    chosen = set(dec.edit_ids.tolist())
    assert np.mean([i in chosen for i in tok.ids[nd > 0.5]]) >= 0.9
    # and it stays on the visible side
    front = set(tok.ids[nd > 0].tolist())
    assert np.mean([i in front for i in chosen]) >= 0.95


@pytest.fixture(scope="module")
def default_edit(bench):
    out = vecset_edit(bench.request(), EditConfig(), tokens=bench.tokens)
    return decode_mesh(out)


def test_default_edit_preserves_and_edits(bench, default_edit):
    box = bench.bench.edit_box
    assert sampled_chamfer(crop_mesh_outside(default_edit, box), crop_mesh_outside(bench.src, box)) < 0.03
    assert sampled_chamfer(crop_mesh(default_edit, box), crop_mesh(bench.tgt, box)) < 0.05


def test_pruning_reduces_drift_single_seed(drift_bench):
    box = drift_bench.bench.edit_box
    req = drift_bench.request()
    cds = {}
    for prune in (False, True):
        out = decode_mesh(vecset_edit(req, EditConfig(seed=0, prune=prune), tokens=drift_bench.tokens))
        cds[prune] = sampled_chamfer(crop_mesh_outside(out, box), crop_mesh_outside(drift_bench.src, box))
    assert cds[True] < cds[False]
