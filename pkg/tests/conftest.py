from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pytest

from vecset_edit.backbone import Condition
from vecset_edit.codec import TokenSet, encode
from vecset_edit.edit import EditRequest
from vecset_edit.geometry import ImageGrid, TriangleMesh, ViewSpec, render_view, sample_surface
from vecset_edit.scenes import EditBenchmark, scene_mesh, two_sphere_benchmark


@dataclass
class BenchCase:
    bench: EditBenchmark
    src: TriangleMesh
    tgt: TriangleMesh
    tokens: TokenSet
    target_tokens: TokenSet

    @property
    def view(self) -> ViewSpec:
        return self.bench.view

    def request(self, mask: ImageGrid | None = None) -> EditRequest:
        v = self.view
        return EditRequest(
            self.src,
            Condition(render_view(self.src, v, "normal"), v, self.tokens),
            Condition(render_view(self.tgt, v, "normal"), v, self.target_tokens),
            self.bench.mask() if mask is None else mask,
            self.tokens,
        )


def _case(drift: bool) -> BenchCase:
    b = two_sphere_benchmark(drift=drift)
    src, tgt = scene_mesh(b.source), scene_mesh(b.target)
    tokens = encode(sample_surface(src, 20000, 0), seed=0)
    target_tokens = encode(sample_surface(tgt, 20000, 1), seed=1)
    return BenchCase(b, src, tgt, tokens, target_tokens)


@pytest.fixture(scope="session")
def bench() -> BenchCase:
    return _case(False)


@pytest.fixture(scope="session")
def drift_bench() -> BenchCase:
    return _case(True)


def random_tokens(rng: np.random.Generator, n: int, width: int = 8, id_offset: int = 0) -> TokenSet:
    feats = rng.normal(size=(n, width))
    feats[:, 3:6] /= np.linalg.norm(feats[:, 3:6], axis=1, keepdims=True)
    return TokenSet(np.arange(id_offset, id_offset + n), feats)
