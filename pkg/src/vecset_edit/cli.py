"""Batch front-end: ``vse <command> --manifest run.json [--seed N] [--out DIR]``.

Every run is described by one JSON manifest; ``--override KEY=VALUE`` edits
a (dotted) manifest field, with VALUE parsed as JSON when possible. Relative
paths resolve against the manifest's directory. Exit codes: 0 ok, 1 runtime
failure, 2 invalid input; failures print a JSON object with a ``kind`` field.
"""

from __future__ import annotations

import argparse
import json
import sys
import traceback
from pathlib import Path

import numpy as np

from . import __version__
from .backbone import BackboneParams, Condition, SyntheticBackbone, read_descriptor
from .codec import CodecParams, TokenSet, decode_mesh, encode, read_token_archive, write_token_archive
from .edit import EditConfig, EditRequest, EditTrace, anchor_scatter, vecset_edit
from .errors import ValidationError, VseError
from .evaluation import geometry_property_sweep, preservation_metrics, write_report
from .geometry import (
    BoundingBox,
    ImageGrid,
    PrimitiveScene,
    TriangleMesh,
    ViewSpec,
    canonical_views,
    render_view,
    sample_surface,
)
from .geometry.io import read_image, read_obj, write_image, write_obj
from .scenes import random_scene, scene_mesh, scene_suite
from .texture import TextureParams, composite_views, normal_diff_masks, project_texture

COMMANDS = ("scene", "encode", "decode", "edit", "verify", "eval", "bake")


class Run:
    """Resolved manifest plus output directory."""

    def __init__(self, manifest: dict, base: Path, out: Path, seed: int):
        self.m = manifest
        self.base = base
        self.out = out
        self.seed = seed

    def path(self, key: str, required: bool = True) -> Path | None:
        val = self.m.get(key)
        if val is None:
            if required:
                raise ValidationError(f"manifest field {key!r} is required", "manifest")
            return None
        p = Path(val)
        p = p if p.is_absolute() else self.base / p
        if not p.exists() and not p.with_suffix(".json").exists():
            raise ValidationError(f"input {str(val)!r} does not exist", "missing_input")
        return p

    def codec(self) -> CodecParams:
        try:
            return CodecParams.from_dict(self.m.get("codec", {}))
        except (TypeError, ValueError) as exc:
            raise ValidationError(str(exc), "config") from exc

    def view(self) -> ViewSpec:
        try:
            return ViewSpec.from_dict(self.m.get("view", {"azimuth_deg": 0, "elevation_deg": 0}))
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"bad view: {exc}", "config") from exc

    def views(self) -> list[ViewSpec]:
        return canonical_views(int(self.m.get("image_size", 64)), float(self.m.get("half_width", 1.0)))

    def box(self, key: str = "edit_box") -> BoundingBox | None:
        d = self.m.get(key)
        if d is None:
            return None
        try:
            return BoundingBox.from_dict(d)
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"bad {key}: {exc}", "config") from exc

    def write_json(self, name: str, payload) -> Path:
        p = self.out / name
        p.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        return p


def _set_dotted(d: dict, key: str, value) -> None:
    parts = key.split(".")
    cur = d
    for p in parts[:-1]:
        nxt = cur.get(p)
        if not isinstance(nxt, dict):
            nxt = {}
            cur[p] = nxt
        cur = nxt
    cur[parts[-1]] = value


def _parse_override(text: str) -> tuple[str, object]:
    if "=" not in text:
        raise ValidationError(f"override {text!r} is not KEY=VALUE", "override")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def load_manifest(path: str | None, overrides: list[str]) -> tuple[dict, Path]:
    manifest: dict = {}
    base = Path.cwd()
    if path:
        p = Path(path)
        if not p.exists():
            raise ValidationError(f"manifest {path!r} does not exist", "missing_input")
        try:
            manifest = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise ValidationError(f"manifest is not valid JSON: {exc}", "manifest") from exc
        if not isinstance(manifest, dict):
            raise ValidationError("manifest must be a JSON object", "manifest")
        base = p.resolve().parent
    for text in overrides:
        _set_dotted(manifest, *_parse_override(text))
    return manifest, base


def _scene_from(run: Run) -> PrimitiveScene:
    if run.m.get("random"):
        return random_scene(np.random.default_rng(run.seed))
    spec = run.m.get("scene")
    if spec is None and run.m.get("scene_path"):
        spec = json.loads(run.path("scene_path").read_text())
    if spec is None:
        raise ValidationError("manifest needs 'scene', 'scene_path' or 'random'", "manifest")
    try:
        return PrimitiveScene.from_dict(spec)
    except ValueError as exc:
        kind = "no_primitives" if "no primitives" in str(exc) else "scene"
        raise ValidationError(str(exc), kind) from exc
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"bad scene description: {exc}", "scene") from exc


def _write_views(run: Run, mesh: TriangleMesh, prefix: str, channels=("normal", "silhouette")) -> None:
    d = run.out / "views"
    d.mkdir(exist_ok=True)
    for v in run.views():
        for ch in channels:
            ext = "ppm" if ch in ("normal", "color") else "pgm"
            write_image(render_view(mesh, v, ch), d / f"{prefix}{ch}_{v.name}.{ext}")


def cmd_scene(run: Run) -> dict:
    scene = _scene_from(run)
    mesh = scene_mesh(scene, int(run.m.get("resolution", 96)))
    write_obj(mesh, run.out / "scene.obj")
    run.write_json("scene.json", scene.to_dict())
    _write_views(run, mesh, "")
    return {"vertices": len(mesh.vertices), "faces": len(mesh.faces), "euler_characteristic": mesh.euler_characteristic()}


def _mesh_input(run: Run, key: str) -> TriangleMesh:
    mesh = read_obj(run.path(key))
    if mesh.is_empty:
        raise ValidationError(f"{key} has no faces", "empty_mesh")
    return mesh


def _encode_mesh(mesh: TriangleMesh, params: CodecParams, seed: int) -> TokenSet:
    return encode(sample_surface(mesh, params.n_surf, seed), params, seed)


def cmd_encode(run: Run) -> dict:
    tokens = _encode_mesh(_mesh_input(run, "mesh"), run.codec(), run.seed)
    write_token_archive(tokens, run.out / "tokens")
    return {"tokens": len(tokens)}


def cmd_decode(run: Run) -> dict:
    tokens = read_token_archive(run.path("tokens"))
    res = run.m.get("resolution")
    mesh = decode_mesh(tokens, int(res) if res is not None else None)
    write_obj(mesh, run.out / "decoded.obj")
    return {"vertices": len(mesh.vertices), "faces": len(mesh.faces)}


def _backbone(run: Run) -> SyntheticBackbone:
    spec = run.m.get("backbone")
    if spec is None:
        return SyntheticBackbone()
    if isinstance(spec, dict):
        return SyntheticBackbone(BackboneParams.from_dict(spec))
    p = Path(spec)
    return SyntheticBackbone(read_descriptor(p if p.is_absolute() else run.base / p))


def _tokens_or_encode(run: Run, key: str, mesh: TriangleMesh, params: CodecParams, seed: int) -> TokenSet:
    if run.m.get(key):
        return read_token_archive(run.path(key))
    return _encode_mesh(mesh, params, seed)


def _read_mask(run: Run, view: ViewSpec) -> ImageGrid:
    if run.m.get("mask"):
        return read_image(run.path("mask"))
    box = run.box("mask_box") or run.box()
    if box is None:
        raise ValidationError("manifest needs 'mask' or an edit/mask box", "manifest")
    return render_view(box.to_mesh(), view, "silhouette")


def _edit_config(run: Run) -> EditConfig:
    cfg = dict(run.m.get("config", {}))
    cfg["seed"] = run.seed
    try:
        return EditConfig.from_dict(cfg)
    except TypeError as exc:
        raise ValidationError(str(exc), "config") from exc


def cmd_edit(run: Run) -> dict:
    params = run.codec()
    config = _edit_config(run)
    view = run.view()
    src_mesh = _mesh_input(run, "source_mesh")
    tgt_mesh = _mesh_input(run, "target_mesh")
    src_tokens = _tokens_or_encode(run, "source_tokens", src_mesh, params, run.seed)
    tgt_tokens = _tokens_or_encode(run, "target_tokens", tgt_mesh, params, run.seed + 1)
    mask = _read_mask(run, view)
    request = EditRequest(
        src_mesh,
        Condition(render_view(src_mesh, view, "normal"), view, src_tokens),
        Condition(render_view(tgt_mesh, view, "normal"), view, tgt_tokens),
        mask,
        src_tokens,
    )
    trace = EditTrace(keep_snapshots=True)
    out_tokens = vecset_edit(request, config, _backbone(run), tokens=src_tokens, trace=trace)
    write_token_archive(out_tokens, run.out / "tokens")
    unchanged = np.array_equal(out_tokens.ids, src_tokens.sorted().ids) and np.array_equal(
        out_tokens.features, src_tokens.sorted().features
    )
    # nothing moved: hand the source surface through instead of a lossy re-decode
    edited = src_mesh if unchanged else decode_mesh(out_tokens)
    write_obj(edited, run.out / "edited.obj")
    trace.write_csv(run.out / "diagnostics.csv")
    scatter = run.out / "scatter"
    scatter.mkdir(exist_ok=True)
    every = max(1, int(run.m.get("scatter_every", 1)))
    for k, (t, e_pts, p_pts) in enumerate(trace.snapshots):
        if k % every == 0:
            write_image(anchor_scatter(e_pts, p_pts, view), scatter / f"step_{k:03d}_t{t:.3f}.ppm")
    dec = trace.decomposition
    if dec is not None and dec.seeding is not None:
        dec.seeding.dump(run.out / "seeding.json")
        dec.gating.dump(run.out / "gating.json")
    summary = {
        "tokens_in": len(src_tokens),
        "tokens_out": len(out_tokens),
        "edit_ids": [int(i) for i in (dec.edit_ids if dec is not None else [])],
        "pruned_ids": [int(i) for i in (trace.pruned_ids if trace.pruned_ids is not None else [])],
        "config": config.to_dict(),
    }
    box = run.box()
    if box is not None:
        report = preservation_metrics(src_mesh, edited, box, run.views())
        write_report(report, run.out / "preservation")
        summary["preservation"] = report.to_dict()
    if run.m.get("texture"):
        summary["texture"] = _bake(run, src_mesh, edited, run.m["texture"])
    run.write_json("edit_summary.json", summary)
    return {"tokens_out": len(out_tokens), "edited": int(len(summary["edit_ids"])), "pruned": len(summary["pruned_ids"])}


def cmd_verify(run: Run) -> dict:
    n = int(run.m.get("n_scenes", 20))
    scenes = scene_suite(n, int(run.m.get("scene_seed", run.seed)))
    report = geometry_property_sweep(
        scenes,
        int(run.m.get("boxes_per_scene", 5)),
        tuple(run.m.get("eps_list", (0.30, 0.10, 0.05, 0.01))),
        run.codec(),
        run.seed,
    )
    write_report(report, run.out / "property_report")
    return {"n_trials": report.n_trials, "pass_rates": report.pass_rates}


def cmd_eval(run: Run) -> dict:
    box = run.box()
    if box is None:
        raise ValidationError("manifest field 'edit_box' is required", "manifest")
    src, edited = _mesh_input(run, "source_mesh"), _mesh_input(run, "edited_mesh")
    try:
        report = preservation_metrics(src, edited, box, run.views(), seed=run.seed)
    except ValueError as exc:
        raise ValidationError(str(exc), "edit_region") from exc
    write_report(report, run.out / "preservation")
    return report.to_dict()


def _read_view_images(run: Run, d: Path, views) -> list[ImageGrid]:
    out = []
    for v in views:
        p = d / f"{v.name}.ppm"
        if not p.exists():
            raise ValidationError(f"missing view image {p.name} in {d}", "missing_input")
        img = read_image(p)
        if (img.height, img.width) != (v.image_size, v.image_size):
            raise ValidationError(f"{p.name} is {img.height}x{img.width}, expected {v.image_size}", "image_shape")
        out.append(img)
    return out


def _bake(run: Run, src: TriangleMesh, edited: TriangleMesh, spec: dict) -> dict:
    views = run.views()
    params = TextureParams.from_dict(spec.get("params", run.m.get("texture_params", {})))

    def folder(key):
        val = spec.get(key)
        if val is None:
            return None
        p = Path(val)
        return p if p.is_absolute() else run.base / p

    src_dir, gen_dir = folder("source_views"), folder("generated_views")
    src_images = _read_view_images(run, src_dir, views) if src_dir else [render_view(src, v, "color") for v in views]
    generated = _read_view_images(run, gen_dir, views) if gen_dir else src_images
    masks = normal_diff_masks(src, edited, views, params)
    views_out = run.out / "texture"
    views_out.mkdir(exist_ok=True)
    composite = composite_views(src_images, generated, masks)
    for v, m, c in zip(views, masks, composite):
        write_image(m, views_out / f"mask_{v.name}.pgm")
        write_image(c, views_out / f"{v.name}.ppm")
    colored = project_texture(edited, views, composite, params)
    write_obj(colored, run.out / "textured.obj")
    return {"mask_pixels": [int(m.pixels.sum()) for m in masks]}


def cmd_bake(run: Run) -> dict:
    src, edited = _mesh_input(run, "source_mesh"), _mesh_input(run, "edited_mesh")
    return _bake(run, src, edited, run.m)


HANDLERS = {
    "scene": cmd_scene,
    "encode": cmd_encode,
    "decode": cmd_decode,
    "edit": cmd_edit,
    "verify": cmd_verify,
    "eval": cmd_eval,
    "bake": cmd_bake,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="vse", description="Localized editing of set-latent 3D shapes.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--manifest", help="JSON run manifest")
    ap.add_argument("--seed", type=int, help="overrides the manifest seed (default 0)")
    ap.add_argument("--out", help="output directory (default: manifest 'out' or ./vse_out)")
    ap.add_argument("--override", action="append", default=[], metavar="KEY=VALUE", help="set a manifest field")
    return ap


def _fail(exc: Exception, code: int, kind: str) -> int:
    print(json.dumps({"kind": kind, "error": kind, "message": str(exc)}, sort_keys=True), file=sys.stderr)
    return code


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        manifest, base = load_manifest(args.manifest, args.override)
        declared = manifest.get("command")
        if declared is not None and declared != args.command:
            raise ValidationError(f"manifest is for {declared!r}, not {args.command!r}", "manifest")
        seed = args.seed if args.seed is not None else int(manifest.get("seed", 0))
        out = Path(args.out or manifest.get("out") or "vse_out")
        out = out if out.is_absolute() or args.out else base / out
        out.mkdir(parents=True, exist_ok=True)
        manifest = {**manifest, "command": args.command, "seed": seed}
        run = Run(manifest, base, out, seed)
        run.write_json("manifest.resolved.json", manifest)
        result = HANDLERS[args.command](run)
    except VseError as exc:
        return _fail(exc, exc.exit_code, exc.kind)
    except (ValueError, KeyError, TypeError) as exc:
        return _fail(exc, 2, "invalid_input")
    except Exception as exc:  # noqa: BLE001 - surfaced as a runtime failure
        traceback.print_exc(file=sys.stderr)
        return _fail(exc, 1, "runtime")
    print(json.dumps({"command": args.command, "out": str(out), **result}, sort_keys=True, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
