"""Measurement harness: geometry-property sweeps and preservation metrics."""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import uniform_filter

from .codec import CodecParams, decode_mesh, encode, full_grid_spacing, tokens_in_box
from .geometry import (
    BoundingBox,
    ImageGrid,
    PrimitiveScene,
    TriangleMesh,
    chamfer_distance,
    crop_mesh,
    crop_mesh_outside,
    render_view,
    sample_surface,
)
from .scenes import scene_mesh

DEFAULT_EPS = (0.30, 0.10, 0.05, 0.01)
CD_SAMPLES = 10_000
PSNR_SENTINEL = 99.0
SSIM_WINDOW = 8
SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2
ROWS = ("decode_then_crop", "subset_decode")
MIN_COVERAGE, MAX_COVERAGE = 0.05, 0.50


def sampled_chamfer(a: TriangleMesh, b: TriangleMesh, n: int = CD_SAMPLES, seed: int = 0) -> float:
    """Chamfer distance between n area-uniform samples of each mesh, both drawn
    with the same seed (so the value is symmetric in its arguments). Empty
    meshes give inf."""
    if a.is_empty or b.is_empty:
        return math.inf
    return chamfer_distance(sample_surface(a, n, seed).positions, sample_surface(b, n, seed).positions)


@dataclass
class PropertyReport:
    eps_list: tuple[float, ...]
    pass_rates: dict[str, list[float]]
    n_trials: int
    n_skipped: int
    trials: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "eps_list": list(self.eps_list),
            "pass_rates": {k: list(v) for k, v in self.pass_rates.items()},
            "n_trials": self.n_trials,
            "n_skipped": self.n_skipped,
            "trials": self.trials,
        }

    def table(self) -> str:
        head = f"{'subset type':<20}" + "".join(f"{'eps=' + format(e, 'g'):>11}" for e in self.eps_list)
        lines = [head, "-" * len(head)]
        for row in ROWS:
            lines.append(f"{row:<20}" + "".join(f"{100 * r:>10.1f}%" for r in self.pass_rates[row]))
        lines.append(f"trials: {self.n_trials}  skipped: {self.n_skipped}")
        return "\n".join(lines) + "\n"


def _json_float(x: float):
    return None if not math.isfinite(x) else float(x)


def random_box(rng: np.random.Generator, anchors: np.ndarray, attempts: int = 500) -> BoundingBox | None:
    """Axis-aligned box near a random anchor covering 5-50% of all anchors."""
    for _ in range(attempts):
        c = anchors[rng.integers(len(anchors))] + rng.normal(scale=0.05, size=3)
        h = rng.uniform(0.1, 0.6, 3)
        box = BoundingBox(c - h, c + h)
        frac = float(box.contains(anchors).mean())
        if MIN_COVERAGE <= frac <= MAX_COVERAGE:
            return box
    return None


def geometry_property_sweep(
    scenes: list[PrimitiveScene],
    boxes_per_scene: int = 5,
    eps_list=DEFAULT_EPS,
    codec_params: CodecParams | None = None,
    seed: int = 0,
) -> PropertyReport:
    """For each random box B: CD(decode(all) cropped to B, S cropped to B) and
    CD(decode(tokens anchored in B), S cropped to B), tabulated as pass rates.

    Subsets decode on the same cell size as the full decode.
    """
    if not scenes:
        raise ValueError("need at least one scene")
    params = codec_params or CodecParams()
    rng = np.random.default_rng(seed)
    trials, skipped = [], 0
    for si, scene in enumerate(scenes):
        s_mesh = scene_mesh(scene, params.grid_resolution)
        tokens = encode(sample_surface(s_mesh, params.n_surf, seed + si), params, seed + si)
        full = decode_mesh(tokens)
        cell = full_grid_spacing(tokens)
        for bi in range(boxes_per_scene):
            box = random_box(rng, tokens.positions)
            ids = tokens_in_box(tokens, box) if box is not None else np.zeros(0, dtype=np.int64)
            if len(ids) == 0:
                skipped += 1
                continue
            truth = crop_mesh(s_mesh, box)
            cd_crop = sampled_chamfer(crop_mesh(full, box), truth, seed=bi)
            cd_sub = sampled_chamfer(decode_mesh(tokens.subset(ids), cell_size=cell), truth, seed=bi)
            trials.append(
                {
                    "scene": si,
                    "box": box.to_dict(),
                    "coverage": len(ids) / len(tokens),
                    "decode_then_crop": _json_float(cd_crop),
                    "subset_decode": _json_float(cd_sub),
                }
            )
    eps_list = tuple(float(e) for e in eps_list)
    rates = {}
    for row in ROWS:
        cds = np.array([math.inf if t[row] is None else t[row] for t in trials])
        rates[row] = [float((cds <= e).mean()) if len(cds) else 0.0 for e in eps_list]
    return PropertyReport(eps_list, rates, len(trials), skipped, trials)


@dataclass
class PreservationReport:
    cd_unedited: float
    psnr_masked: float
    ssim_masked: float
    runtime_s: float = 0.0

    def to_dict(self, include_timing: bool = False) -> dict:
        d = {"cd_unedited": self.cd_unedited, "psnr_masked": self.psnr_masked, "ssim_masked": self.ssim_masked}
        if include_timing:
            d["runtime_s"] = self.runtime_s
        return d

    def table(self) -> str:
        head = f"{'CD (unedited)':>14}{'PSNR (M)':>12}{'SSIM (M)':>12}"
        return f"{head}\n{'-' * len(head)}\n{self.cd_unedited:>14.6f}{self.psnr_masked:>12.3f}{self.ssim_masked:>12.4f}\n"


def psnr(a, b, mask=None) -> float:
    """PSNR for data range 1 over masked pixels (all channels); identical
    inputs give the 99 dB sentinel."""
    a = np.asarray(getattr(a, "pixels", a), dtype=np.float64)
    b = np.asarray(getattr(b, "pixels", b), dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("image shapes differ")
    diff2 = (a - b) ** 2
    if mask is not None:
        sel = np.asarray(mask, dtype=bool).reshape(a.shape[:2])
        diff2 = diff2[sel]
    if diff2.size == 0:
        raise ValueError("no pixels to compare")
    mse = float(diff2.mean())
    return PSNR_SENTINEL if mse == 0 else min(PSNR_SENTINEL, 10.0 * math.log10(1.0 / mse))


def ssim_map(a, b) -> np.ndarray:
    """Per-pixel, per-channel SSIM with an 8x8 uniform window."""
    a = np.asarray(getattr(a, "pixels", a), dtype=np.float64)
    b = np.asarray(getattr(b, "pixels", b), dtype=np.float64)
    if a.ndim == 2:
        a, b = a[:, :, None], b[:, :, None]
    size = (SSIM_WINDOW, SSIM_WINDOW, 1)
    mu_a, mu_b = uniform_filter(a, size), uniform_filter(b, size)
    var_a = uniform_filter(a * a, size) - mu_a * mu_a
    var_b = uniform_filter(b * b, size) - mu_b * mu_b
    cov = uniform_filter(a * b, size) - mu_a * mu_b
    num = (2 * mu_a * mu_b + SSIM_C1) * (2 * cov + SSIM_C2)
    den = (mu_a * mu_a + mu_b * mu_b + SSIM_C1) * (var_a + var_b + SSIM_C2)
    return num / den


def ssim(a, b, mask=None) -> float:
    m = ssim_map(a, b)
    if mask is not None:
        m = m[np.asarray(mask, dtype=bool).reshape(m.shape[:2])]
    if m.size == 0:
        raise ValueError("no pixels to compare")
    return float(m.mean())


def preservation_metrics(src: TriangleMesh, edited: TriangleMesh, edit_box: BoundingBox, views, seed: int = 0) -> PreservationReport:
    """CD outside the edit box, and PSNR/SSIM of the normal renders over pixels
    outside the box's silhouette, pooled over the views."""
    start = time.perf_counter()
    outside_src = crop_mesh_outside(src, edit_box)
    outside_edit = crop_mesh_outside(edited, edit_box)
    if outside_src.is_empty or outside_edit.is_empty:
        raise ValueError("edit region covers everything")
    cd = sampled_chamfer(outside_src, outside_edit, seed=seed)
    box_mesh = edit_box.to_mesh()
    a_px, b_px, keep = [], [], []
    for v in views:
        a_px.append(render_view(src, v, "normal").pixels)
        b_px.append(render_view(edited, v, "normal").pixels)
        keep.append(render_view(box_mesh, v, "silhouette").pixels[:, :, 0] == 0)
    if not any(k.any() for k in keep):
        raise ValueError("edit region covers everything")
    sq = np.concatenate([((a - b) ** 2)[k].reshape(-1) for a, b, k in zip(a_px, b_px, keep)])
    mse = float(sq.mean())
    p = PSNR_SENTINEL if mse == 0 else min(PSNR_SENTINEL, 10.0 * math.log10(1.0 / mse))
    s = float(np.concatenate([ssim_map(a, b)[k].reshape(-1) for a, b, k in zip(a_px, b_px, keep)]).mean())
    return PreservationReport(cd, p, s, time.perf_counter() - start)


def write_report(report, path: str | Path) -> tuple[Path, Path]:
    """``<path>.json`` plus a fixed-width ``<path>.txt`` table."""
    base = Path(path)
    if base.suffix in (".json", ".txt"):
        base = base.with_suffix("")
    jp, tp = base.with_suffix(".json"), base.with_suffix(".txt")
    jp.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    tp.write_text(report.table())
    return jp, tp


def images_equal(a: ImageGrid, b: ImageGrid) -> bool:
    return a.pixels.shape == b.pixels.shape and bool(np.array_equal(a.pixels, b.pixels))
