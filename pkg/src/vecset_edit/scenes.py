"""Synthetic CSG scenes: random suites and the two-sphere edit benchmarks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import (
    BoundingBox,
    Box,
    Capsule,
    ImageGrid,
    PrimitiveScene,
    Sphere,
    TriangleMesh,
    ViewSpec,
    marching_cubes,
    render_view,
    scene_grid,
)

SCENE_RESOLUTION = 96

SPHERE_A = Sphere((-0.45, 0.0, 0.0), 0.3)
SPHERE_B = Sphere((0.45, 0.0, 0.0), 0.3)
# a block grown out of the camera-facing side of sphere A
EDIT_BLOCK = Box((-0.45, 0.0, 0.3), (0.12, 0.12, 0.12))
# the generator's imperfect recall of B in the drift benchmark
DRIFTED_B = Sphere((0.45, 0.0, 0.0), 0.42)
EDIT_BOX = BoundingBox(np.array([-0.8, -0.35, -0.35]), np.array([-0.1, 0.35, 0.5]))


def scene_mesh(scene: PrimitiveScene, resolution: int = SCENE_RESOLUTION) -> TriangleMesh:
    return marching_cubes(scene_grid(scene, resolution), 0.0)


def two_sphere_scene() -> PrimitiveScene:
    return PrimitiveScene((SPHERE_A, SPHERE_B))


def random_scene(rng: np.random.Generator, max_primitives: int = 3) -> PrimitiveScene:
    """One to ``max_primitives`` spheres, boxes and capsules inside [-1, 1]^3."""
    prims = []
    for _ in range(int(rng.integers(1, max_primitives + 1))):
        kind = int(rng.integers(3))
        c = rng.uniform(-0.45, 0.45, 3)
        if kind == 0:
            prims.append(Sphere(tuple(c), float(rng.uniform(0.15, 0.35))))
        elif kind == 1:
            prims.append(Box(tuple(c), tuple(rng.uniform(0.1, 0.3, 3))))
        else:
            d = rng.normal(size=3)
            d *= rng.uniform(0.15, 0.35) / np.linalg.norm(d)
            prims.append(Capsule(tuple(c - d), tuple(c + d), float(rng.uniform(0.08, 0.2))))
    return PrimitiveScene(tuple(prims))


def scene_suite(n: int, seed: int) -> list[PrimitiveScene]:
    rng = np.random.default_rng(seed)
    return [random_scene(rng) for _ in range(n)]


@dataclass(frozen=True)
class EditBenchmark:
    """Source and target scenes of a localized edit seen from one view."""

    source: PrimitiveScene
    target: PrimitiveScene
    edit_box: BoundingBox
    view: ViewSpec

    def mask(self) -> ImageGrid:
        return render_view(self.edit_box.to_mesh(), self.view, "silhouette")


def two_sphere_benchmark(drift: bool = False, image_size: int = 64) -> EditBenchmark:
    """Sphere A gains a block; sphere B should stay put.

    With ``drift`` the target also carries an inflated B, so editable tokens
    captured by B's targets visibly corrupt the preserved region.
    """
    b = DRIFTED_B if drift else SPHERE_B
    return EditBenchmark(
        two_sphere_scene(),
        PrimitiveScene((SPHERE_A, EDIT_BLOCK, b)),
        EDIT_BOX,
        ViewSpec(0.0, 0.0, image_size),
    )
