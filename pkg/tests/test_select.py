from __future__ import annotations

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import gating_oracle, kl_oracle, random_record, seeding_oracle, threshold_oracle, top_layers_oracle
from vecset_edit.backbone import BackboneParams, self_attention_from_anchors
from vecset_edit.codec import TokenSet
from vecset_edit.geometry import ImageGrid
from vecset_edit.select import (
    AttentionRecord,
    SelectParams,
    Selection,
    adaptive_threshold,
    layer_informativeness,
    mask_alignment_scores,
    select_layers,
    token_gating,
    token_seeding,
)


def _tokens(ids) -> TokenSet:
    feats = np.zeros((len(ids), 8))
    feats[:, 5] = 1
    return TokenSet(ids, feats)


def _record(cross_layers, self_layers=None, t=0.5) -> AttentionRecord:
    n = cross_layers[0].shape[0]
    rec = AttentionRecord(np.arange(n))
    rec.append(t, cross_layers, self_layers or [np.eye(n)] * len(cross_layers))
    return rec


# mask alignment


def test_full_and_empty_mask_scores():
    rng = np.random.default_rng(0)
    rec = _record([rng.dirichlet(np.ones(16), size=5), rng.dirichlet(np.ones(16), size=5)])
    full = mask_alignment_scores(rec, ImageGrid(np.ones((4, 4))), [0, 1])
    assert np.allclose(full, 1.0, atol=1e-6)
    assert np.all(mask_alignment_scores(rec, ImageGrid(np.zeros((4, 4))), [0, 1]) == 0)


def test_one_hot_row_score():
    a = np.full((3, 4), 0.25)
    a[1] = [0, 0, 1, 0]
    mask = ImageGrid(np.array([[0, 0], [1, 0]], dtype=float))
    s = mask_alignment_scores(_record([a]), mask, [0])
    assert s.tolist() == [0.25, 1.0, 0.25]


def test_mask_validation():
    rec = _record([np.full((2, 4), 0.25)])
    with pytest.raises(ValueError):
        mask_alignment_scores(rec, ImageGrid(np.full((2, 2), 0.5)), [0])
    with pytest.raises(ValueError):
        mask_alignment_scores(rec, ImageGrid(np.ones((3, 3))), [0])


# informativeness


def test_uniform_layer_has_zero_kl():
    rec = _record([np.full((5, 9), 1 / 9)])
    assert abs(layer_informativeness(rec)[0]) <= 1e-9


def test_permutation_layer_closed_form():
    n = 9
    perm = np.eye(n)[np.random.default_rng(0).permutation(n)]
    rec = _record([perm])
    rec.append(0.2, [perm], [np.eye(n)])
    assert layer_informativeness(rec)[0] == pytest.approx(2 * n * math.log(n), rel=1e-12)


def test_sharp_beats_uniform():
    rng = np.random.default_rng(2)
    rec = _record([np.full((6, 16), 1 / 16), rng.dirichlet(np.full(16, 0.2), size=6)])
    d = layer_informativeness(rec)
    assert d[1] > d[0]


def test_broadcast_layer_short_circuit_matches_dense():
    dense = np.full((4, 9), 1 / 9)
    rec_b = _record([np.broadcast_to(np.asarray(1 / 9), (4, 9))])
    assert layer_informativeness(rec_b)[0] == 0.0
    assert abs(layer_informativeness(_record([dense]))[0]) <= 1e-12


# layer choice and thresholds


def test_select_layers_examples():
    assert select_layers([0, 5, 3, 1], 2) == (1, 2)
    assert select_layers([2, 2, 2, 2], 2) == (0, 1)
    with pytest.raises(ValueError):
        select_layers([1.0], 2)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=1, max_size=10), st.integers(1, 10))
def test_select_layers_matches_sort(d, k):
    k = min(k, len(d))
    assert set(select_layers(d, k)) == top_layers_oracle(d, k)


def test_threshold_examples():
    assert adaptive_threshold(np.full(7, 0.4), 0.5, 0.1) == pytest.approx(0.2)
    assert adaptive_threshold([1] + [0] * 9, 0.7, 0.10) == pytest.approx(0.7)
    # 0.1 * 30 is 3.0000000000000004 in binary; the top three are averaged
    assert adaptive_threshold(np.arange(30.0), 1.0, 0.1) == pytest.approx(28.0)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=60), st.floats(0.05, 1.0), st.floats(0.01, 1.0))
def test_threshold_matches_sort(scores, alpha, frac):
    assert adaptive_threshold(scores, alpha, frac) == pytest.approx(threshold_oracle(scores, alpha, frac), abs=1e-12)


# seeding and gating


def test_seeding_empty_and_full_mask():
    rng = np.random.default_rng(4)
    rec, tok, _, _ = random_record(rng)
    n = int(math.isqrt(rec.cross[0][0].shape[1]))
    assert len(token_seeding(tok, rec, ImageGrid(np.zeros((n, n)))).ids) == 0
    full = token_seeding(tok, rec, ImageGrid(np.ones((n, n))))
    assert np.array_equal(full.ids, np.sort(tok.ids))


def test_gating_examples():
    rng = np.random.default_rng(5)
    rec, tok, _, _ = random_record(rng)
    assert np.array_equal(token_gating(tok, rec, tok.ids).ids, np.sort(tok.ids))
    assert len(token_gating(tok, rec, []).ids) == 0
    with pytest.raises(ValueError):
        token_gating(tok, rec, [10**6])


def test_gating_two_clusters():
    rng = np.random.default_rng(0)
    a = rng.normal(scale=0.04, size=(20, 3))
    b = rng.normal(scale=0.04, size=(20, 3)) + [1.0, 0, 0]
    s = self_attention_from_anchors(np.vstack([a, b]), BackboneParams())
    rec = AttentionRecord(np.arange(40))
    rec.append(0.5, [np.full((40, 4), 0.25)] * 4, s)
    gated = set(token_gating(_tokens(np.arange(40)), rec, np.arange(10)).ids.tolist())
    assert set(range(10, 20)) <= gated
    assert not gated & set(range(20, 40))


@pytest.mark.parametrize("seed", range(20))
def test_seeding_and_gating_match_oracles(seed):
    rng = np.random.default_rng(1000 + seed)
    rec, tok, mask, _ = random_record(rng)
    params = SelectParams(alpha_I=float(rng.uniform(0.3, 0.95)), alpha_A=float(rng.uniform(0.3, 0.95)),
                          top_k_layers=int(rng.integers(1, rec.n_layers + 1)), top_fraction=float(rng.uniform(0.05, 0.5)))
    sel = token_seeding(tok, rec, mask, params)
    d = kl_oracle(rec, params.kl_epsilon)
    layers = top_layers_oracle(d, params.top_k_layers)
    assert set(sel.layers_used) == layers
    assert set(sel.ids.tolist()) == seeding_oracle(rec, mask.pixels, sorted(layers), params.alpha_I, params.top_fraction)
    gated = token_gating(tok, rec, sel.ids, params)
    assert set(gated.ids.tolist()) == gating_oracle(rec, sel.ids, params.alpha_A, params.top_fraction)


def test_kl_matches_loop_oracle():
    rng = np.random.default_rng(9)
    for _ in range(10):
        rec, _, _, _ = random_record(rng)
        assert np.allclose(layer_informativeness(rec), kl_oracle(rec, 1e-12), rtol=1e-5, atol=1e-6)


def test_record_validation():
    rec = AttentionRecord([1, 2])
    with pytest.raises(ValueError):
        rec.append(0.5, [np.ones((3, 4))], [np.eye(2)])
    rec.append(0.5, [np.ones((2, 4)) / 4], [np.eye(2)])
    with pytest.raises(ValueError):
        rec.append(0.4, [np.ones((2, 4)) / 4] * 2, [np.eye(2)] * 2)


def test_misaligned_tokens_rejected():
    rec = AttentionRecord([1, 2])
    rec.append(0.5, [np.ones((2, 4)) / 4], [np.eye(2)])
    with pytest.raises(ValueError):
        token_seeding(_tokens([1, 3]), rec, ImageGrid(np.ones((2, 2))))


def test_selection_dump(tmp_path):
    s = Selection(np.array([3]), np.array([0.9, 0.1]), np.array([3, 4]), 0.5, (0, 2))
    s.dump(tmp_path / "s.json")
    d = json.loads((tmp_path / "s.json").read_text())
    assert d["selected_ids"] == [3] and d["threshold"] == 0.5 and d["layers_used"] == [0, 2]


def test_params_validation():
    for bad in ({"alpha_I": 0}, {"alpha_A": 1.5}, {"top_fraction": 0}, {"top_k_layers": 0}, {"kl_epsilon": 0}):
        with pytest.raises(ValueError):
            SelectParams(**bad)
