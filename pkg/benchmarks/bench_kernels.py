"""Compiled kernels vs their numpy twins.

    python benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

Prints one line per kernel with the best-of-N wall time of each backend and
the speedup, after checking the two backends agree on the benchmark input.
"""

from __future__ import annotations

import argparse
import json
import time

import numpy as np

from vecset_edit import kernels


def _inputs(rng: np.random.Generator) -> dict:
    pts = rng.normal(size=(8192, 3))
    pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    anchors = pts[:512]
    q = rng.uniform(-1.2, 1.2, size=(40_000, 3))
    tri_xy = rng.uniform(0, 128, size=(3000, 3, 2))
    tri_z = rng.uniform(-1, 1, size=(3000, 3))
    return {
        "farthest_point_sampling": ((pts, 512, 0), {}),
        "blend_sdf": ((q, anchors, anchors.copy(), 0.4, 0.05), {}),
        "rasterize": ((tri_xy, tri_z, 128, 128), {}),
    }


def _best(fn, args, repeat: int) -> tuple[float, object]:
    best, out = float("inf"), None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def _agree(a, b) -> bool:
    if isinstance(a, tuple):
        return all(_agree(x, y) for x, y in zip(a, b))
    a, b = np.asarray(a), np.asarray(b)
    return a.shape == b.shape and bool(np.allclose(a, b, rtol=1e-9, atol=1e-9, equal_nan=True))


def run(repeat: int = 5, seed: int = 0) -> list[dict]:
    backends = kernels.available_backends()
    rows = []
    for name, (args, _) in _inputs(np.random.default_rng(seed)).items():
        fn = getattr(kernels, name)
        times, outs = {}, {}
        for bname, impl in backends.items():
            times[bname], outs[bname] = _best(lambda *a, impl=impl: fn(*a, impl=impl), args, repeat)
        row = {"kernel": name, **{f"{b}_s": t for b, t in times.items()}}
        if "cython" in times:
            row["speedup"] = times["numpy"] / times["cython"]
            row["agree"] = _agree(outs["numpy"], outs["cython"])
        rows.append(row)
    return rows


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--json", help="also write the rows here")
    args = ap.parse_args()
    rows = run(args.repeat, args.seed)
    print(f"{'kernel':<26}{'numpy [s]':>12}{'cython [s]':>12}{'speedup':>10}  agree")
    for r in rows:
        cy = r.get("cython_s")
        print(
            f"{r['kernel']:<26}{r['numpy_s']:>12.4f}"
            + (f"{cy:>12.4f}{r['speedup']:>9.1f}x  {r['agree']}" if cy is not None else f"{'n/a':>12}")
        )
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
