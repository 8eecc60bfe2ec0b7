from __future__ import annotations

import json
import math

import numpy as np
import pytest

from vecset_edit.evaluation import (
    PSNR_SENTINEL,
    PropertyReport,
    geometry_property_sweep,
    preservation_metrics,
    psnr,
    random_box,
    sampled_chamfer,
    ssim,
    write_report,
)
from vecset_edit.geometry import BoundingBox, ImageGrid, TriangleMesh, box_mesh, canonical_views, concat_meshes, icosphere
from vecset_edit.scenes import scene_suite

VIEWS = canonical_views(32)
BOX = BoundingBox(np.array([0.3, -1, -1]), np.array([1.0, 1, 1]))


@pytest.fixture(scope="module")
def src():
    return icosphere(0.5, 3)


def test_psnr_closed_form():
    a, b = ImageGrid(np.full((8, 8, 3), 0.3)), ImageGrid(np.full((8, 8, 3), 0.4))
    assert psnr(a, b) == pytest.approx(20.0)
    assert psnr(a, a) == PSNR_SENTINEL


def test_ssim_identity_and_drop():
    rng = np.random.default_rng(0)
    a = rng.random((16, 16, 3))
    assert ssim(a, a) == pytest.approx(1.0)
    assert ssim(a, rng.random((16, 16, 3))) < 0.5


def test_sampled_chamfer_symmetric_and_empty(src):
    other = icosphere(0.45, 3)
    assert sampled_chamfer(src, other) == sampled_chamfer(other, src)
    assert math.isinf(sampled_chamfer(src, TriangleMesh.empty()))


def test_identical_meshes_hit_sentinels(src):
    r = preservation_metrics(src, src, BOX, VIEWS)
    assert r.cd_unedited == 0 and r.psnr_masked == PSNR_SENTINEL and r.ssim_masked == pytest.approx(1.0)


def test_change_inside_box_is_invisible_to_cd(src):
    bump = box_mesh([0.55, -0.05, -0.05], [0.65, 0.05, 0.05])
    r = preservation_metrics(src, concat_meshes([src, bump]), BOX, VIEWS)
    assert r.cd_unedited < 1e-6


def test_box_covering_everything_rejected(src):
    with pytest.raises(ValueError):
        preservation_metrics(src, src, BoundingBox(np.full(3, -2.0), np.full(3, 2.0)), VIEWS)


def test_random_box_coverage():
    rng = np.random.default_rng(0)
    pts = rng.uniform(-1, 1, (500, 3))
    for _ in range(10):
        box = random_box(rng, pts)
        assert box is not None
        assert 0.05 <= box.contains(pts).mean() <= 0.5


@pytest.fixture(scope="module")
def small_sweep():
    return geometry_property_sweep(scene_suite(2, 7), boxes_per_scene=3, eps_list=(10.0, 0.3, 0.05, 0.01), seed=1)


def test_sweep_large_eps_passes_everything(small_sweep):
    assert small_sweep.n_trials + small_sweep.n_skipped == 6
    assert small_sweep.pass_rates["decode_then_crop"][0] == 1.0
    assert small_sweep.pass_rates["subset_decode"][0] == 1.0


def test_sweep_rates_monotone(small_sweep):
    for rates in small_sweep.pass_rates.values():
        assert rates == sorted(rates, reverse=True)


def test_report_files(tmp_path, small_sweep):
    jp, tp = write_report(small_sweep, tmp_path / "rep")
    d = json.loads(jp.read_text())
    assert d["pass_rates"] == small_sweep.pass_rates
    assert "subset_decode" in tp.read_text()
    assert isinstance(small_sweep, PropertyReport)


def test_timing_excluded_by_default(src):
    r = preservation_metrics(src, src, BOX, VIEWS)
    assert "runtime_s" not in r.to_dict() and r.to_dict(include_timing=True)["runtime_s"] >= 0
