from __future__ import annotations

import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from vecset_edit.cli import main
from vecset_edit.evaluation import sampled_chamfer
from vecset_edit.geometry import ImageGrid, canonical_views
from vecset_edit.geometry.io import read_image, read_obj, write_image
from vecset_edit.scenes import EDIT_BOX, two_sphere_benchmark
from vecset_edit.texture import project_texture


def _run(capsys, *argv) -> tuple[int, dict]:
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    text = out if code == 0 else err
    return code, json.loads(text.strip().splitlines()[-1])


def _manifest(path: Path, **fields) -> Path:
    path.write_text(json.dumps(fields))
    return path


def _tree(root: Path) -> dict[str, bytes]:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    b = two_sphere_benchmark()
    for name, scene in (("src", b.source), ("tgt", b.target)):
        _manifest(root / f"{name}.json", command="scene", scene=scene.to_dict())
        assert main(["scene", "--manifest", str(root / f"{name}.json"), "--out", str(root / name)]) == 0
    return root


def test_scene_two_spheres(work):
    assert read_obj(work / "src" / "scene.obj").euler_characteristic() == 4
    assert len(list((work / "src" / "views").glob("normal_*.ppm"))) == 6


def test_scene_empty_spec(tmp_path, capsys):
    m = _manifest(tmp_path / "m.json", scene={"primitives": []})
    code, err = _run(capsys, "scene", "--manifest", m, "--out", tmp_path / "o")
    assert code == 2 and err["kind"] == "no_primitives" and "no primitives" in err["message"]


def test_scene_is_deterministic(work, tmp_path):
    m = work / "src.json"
    main(["scene", "--manifest", str(m), "--out", str(tmp_path / "a")])
    assert _tree(tmp_path / "a") == _tree(work / "src")


def test_random_scene_uses_seed(tmp_path):
    m = _manifest(tmp_path / "m.json", random=True, resolution=48)
    for name, seed in (("a", 1), ("b", 1), ("c", 2)):
        assert main(["scene", "--manifest", str(m), "--seed", str(seed), "--out", str(tmp_path / name)]) == 0
    a, b, c = ((tmp_path / n / "scene.json").read_text() for n in "abc")
    assert a == b and a != c


def test_override_and_bad_override(tmp_path, capsys):
    m = _manifest(tmp_path / "m.json", scene={"primitives": []})
    sphere = '{"primitives": [{"type": "sphere", "center": [0, 0, 0], "radius": 0.4}]}'
    assert main(["scene", "--manifest", str(m), "--override", f"scene={sphere}", "--out", str(tmp_path / "o")]) == 0
    capsys.readouterr()
    code, err = _run(capsys, "scene", "--manifest", m, "--override", "noequals", "--out", tmp_path / "p")
    assert code == 2 and err["kind"] == "override"


def test_manifest_command_mismatch(tmp_path, capsys):
    m = _manifest(tmp_path / "m.json", command="encode")
    code, err = _run(capsys, "scene", "--manifest", m, "--out", tmp_path / "o")
    assert code == 2 and err["kind"] == "manifest"


def test_missing_input_path(tmp_path, capsys):
    m = _manifest(tmp_path / "m.json", mesh="nope.obj")
    code, err = _run(capsys, "encode", "--manifest", m, "--out", tmp_path / "o")
    assert code == 2 and err["kind"] == "missing_input"


def test_encode_decode(work, tmp_path):
    m = _manifest(tmp_path / "e.json", mesh=str(work / "src" / "scene.obj"), codec={"n_tok": 256, "n_surf": 8000})
    assert main(["encode", "--manifest", str(m), "--out", str(tmp_path / "enc")]) == 0
    d = _manifest(tmp_path / "d.json", tokens=str(tmp_path / "enc" / "tokens"), resolution=48)
    assert main(["decode", "--manifest", str(d), "--out", str(tmp_path / "dec")]) == 0
    src = read_obj(work / "src" / "scene.obj")
    assert sampled_chamfer(read_obj(tmp_path / "dec" / "decoded.obj"), src) < 0.05


def _edit_manifest(work: Path, path: Path, **extra) -> Path:
    return _manifest(
        path,
        command="edit",
        source_mesh=str(work / "src" / "scene.obj"),
        target_mesh=str(work / "tgt" / "scene.obj"),
        view={"azimuth_deg": 0, "elevation_deg": 0, "image_size": 64},
        edit_box=EDIT_BOX.to_dict(),
        **extra,
    )


@pytest.fixture(scope="module")
def edited(work):
    m = _edit_manifest(work, work / "edit.json")
    assert main(["edit", "--manifest", str(m), "--out", str(work / "ed")]) == 0
    return work / "ed"


def test_edit_outputs(edited):
    for name in ("tokens.json", "tokens.bin", "edited.obj", "diagnostics.csv", "seeding.json", "gating.json", "preservation.json"):
        assert (edited / name).exists(), name
    assert len(list((edited / "scatter").glob("*.ppm"))) == 35
    rows = (edited / "diagnostics.csv").read_text().splitlines()
    assert rows[0] == "t,n_edit,mean_drift" and len(rows) == 36


def test_edit_benchmark_preserves(edited):
    assert json.loads((edited / "preservation.json").read_text())["cd_unedited"] < 0.03


def test_identity_edit(work, tmp_path):
    write_image(ImageGrid.zeros(64), tmp_path / "zero.pgm")
    m = _edit_manifest(work, tmp_path / "m.json", mask=str(tmp_path / "zero.pgm"))
    assert main(["edit", "--manifest", str(m), "--out", str(tmp_path / "o")]) == 0
    out = read_obj(tmp_path / "o" / "edited.obj")
    assert sampled_chamfer(out, read_obj(work / "src" / "scene.obj")) < 1e-6


def test_bad_mask_dimensions(work, tmp_path, capsys):
    write_image(ImageGrid.zeros(32), tmp_path / "small.pgm")
    m = _edit_manifest(work, tmp_path / "m.json", mask=str(tmp_path / "small.pgm"))
    code, err = _run(capsys, "edit", "--manifest", m, "--out", tmp_path / "o")
    assert code == 2 and err["kind"] == "mask_shape"


def test_eval_identical_meshes(work, tmp_path):
    src = str(work / "src" / "scene.obj")
    m = _manifest(tmp_path / "m.json", source_mesh=src, edited_mesh=src, edit_box=EDIT_BOX.to_dict())
    assert main(["eval", "--manifest", str(m), "--out", str(tmp_path / "o")]) == 0
    rep = json.loads((tmp_path / "o" / "preservation.json").read_text())
    assert rep == {"cd_unedited": 0.0, "psnr_masked": 99.0, "ssim_masked": 1.0}


def test_bake_no_edit_matches_projection(work, tmp_path):
    views = canonical_views(64)
    rng = np.random.default_rng(0)
    sv = tmp_path / "src_views"
    sv.mkdir()
    images = []
    for v in views:
        img = ImageGrid(np.round(rng.random((64, 64, 3)) * 255) / 255)
        write_image(img, sv / f"{v.name}.ppm")
        images.append(read_image(sv / f"{v.name}.ppm"))
    src = str(work / "src" / "scene.obj")
    m = _manifest(tmp_path / "m.json", source_mesh=src, edited_mesh=src, source_views=str(sv), generated_views=str(sv))
    assert main(["bake", "--manifest", str(m), "--out", str(tmp_path / "o")]) == 0
    mesh = read_obj(src)
    expect = project_texture(mesh, views, images).vertex_colors
    got = read_obj(tmp_path / "o" / "textured.obj").vertex_colors
    assert np.array_equal(got, expect)
    for v, img in zip(views, images):
        assert np.array_equal(read_image(tmp_path / "o" / "texture" / f"{v.name}.ppm").pixels, img.pixels)


def test_verify_small_suite(tmp_path):
    m = _manifest(tmp_path / "m.json", n_scenes=2, boxes_per_scene=2)
    assert main(["verify", "--manifest", str(m), "--out", str(tmp_path / "o")]) == 0
    rates = json.loads((tmp_path / "o" / "property_report.json").read_text())["pass_rates"]
    for row in rates.values():
        assert row == sorted(row, reverse=True)


def test_subprocess_exit_codes(tmp_path):
    m = _manifest(tmp_path / "m.json", scene={"primitives": []})
    proc = subprocess.run(
        [sys.executable, "-m", "vecset_edit", "scene", "--manifest", str(m), "--out", str(tmp_path / "o")],
        capture_output=True, text=True,
    )
    assert proc.returncode == 2
    assert json.loads(proc.stderr.strip().splitlines()[-1])["kind"] == "no_primitives"
