import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import BACKENDS, random_blob, render_dataset
from orbitcarve.geometry import TriMesh
from orbitcarve.metrics import (
    BVH,
    ClipScoreError,
    EmbeddingProvider,
    EvalReport,
    MetricError,
    ToyEmbeddingProvider,
    brute_force,
    chamfer,
    clip_score,
    closest_point_triangle,
    mask_iou,
    normal_consistency,
    point_triangle_distance,
    sample_surface,
    silhouette_iou,
)
from orbitcarve.primitives import icosphere

coord = st.floats(-2, 2, allow_nan=False)
point = st.tuples(coord, coord, coord)


# point / triangle


def test_point_over_triangle_interior():
    assert point_triangle_distance((0, 0, 1), (-1, -1, 0), (1, -1, 0), (0, 1, 0)) == 1.0


@settings(max_examples=200, deadline=None)
@given(point, point, point, point)
def test_closest_point_is_on_triangle_and_minimal(p, a, b, c):
    p, a, b, c = map(np.asarray, (p, a, b, c))
    if np.linalg.norm(np.cross(b - a, c - a)) < 1e-3:
        return
    kernel = getattr(closest_point_triangle, "py_func", closest_point_triangle)
    d2, qx, qy, qz = kernel(*p, *a, *b, *c)
    q = np.array([qx, qy, qz])
    assert d2 == pytest.approx(float((p - q) @ (p - q)), abs=1e-12)
    # q lies in the triangle: barycentrics in [0, 1]
    m = np.stack([b - a, c - a], axis=1)
    uv, *_ = np.linalg.lstsq(m, q - a, rcond=None)
    assert uv.min() >= -1e-7 and uv.sum() <= 1 + 1e-7
    # and no point of a dense barycentric grid is closer
    s = np.linspace(0, 1, 41)
    u, v = np.meshgrid(s, s)
    keep = u + v <= 1
    grid = a + u[keep, None] * (b - a) + v[keep, None] * (c - a)
    assert math.sqrt(d2) <= np.linalg.norm(grid - p, axis=1).min() + 1e-9


@pytest.mark.parametrize("backend", BACKENDS)
def test_bvh_matches_brute_force(backend, rng):
    m = random_blob(level=3, seed=5)
    pts = rng.uniform(-1.2, 1.2, (500, 3))
    d, f, q = BVH(m.vertices, m.faces).query(pts, backend)
    bd, bf, bq = brute_force(pts, m.vertices, m.faces)
    np.testing.assert_allclose(d, np.sqrt(bd), rtol=1e-12, atol=1e-15)
    np.testing.assert_array_equal(f, bf)
    np.testing.assert_allclose(q, bq, atol=1e-14)


def test_bvh_ties_take_lower_face():
    v = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0]], float)
    faces = np.array([[0, 1, 2], [0, 1, 2], [2, 0, 1]])
    for backend in BACKENDS:
        _, f, _ = BVH(v, faces).query(np.array([[0.2, 0.2, 0.5], [-1, -1, 0]]), backend)
        np.testing.assert_array_equal(f, [0, 0])


# chamfer


def test_chamfer_identical_is_zero():
    m = icosphere(3)
    r = chamfer(m, m, 5000, 0)
    assert r.mean < 1e-12 and r.rms < 1e-12


def test_chamfer_concentric_spheres():
    a, b = icosphere(4), icosphere(4, 1.1)
    r = chamfer(a, b, 20000, 0)
    assert r.mean == pytest.approx(0.1, rel=0.1)
    assert r.a_to_b[0] == pytest.approx(0.1, rel=0.1)
    assert r.b_to_a[0] == pytest.approx(0.1, rel=0.1)


def test_chamfer_swap_symmetric():
    a, b = random_blob(seed=1), random_blob(seed=2)
    ab = chamfer(a, b, 3000, (3, 9))
    ba = chamfer(b, a, 3000, (9, 3))
    assert (ab.mean, ab.rms) == (ba.mean, ba.rms)
    assert ab.a_to_b == ba.b_to_a


def test_chamfer_int_seed_is_pair():
    a, b = random_blob(seed=1), random_blob(seed=2)
    assert chamfer(a, b, 500, 4) == chamfer(a, b, 500, (4, 5))


def test_chamfer_equals_all_pairs_loop():
    a = random_blob(level=1, seed=3)  # 80 faces
    a = TriMesh(a.vertices, a.faces[:50])
    b = random_blob(level=1, seed=4)
    b = TriMesh(b.vertices, b.faces[:40])
    kernel = getattr(closest_point_triangle, "py_func", closest_point_triangle)

    def directed(pts, mesh):
        out = []
        for p in pts:
            best = math.inf
            for tri in mesh.vertices[mesh.faces]:
                best = min(best, kernel(*p, *tri[0], *tri[1], *tri[2])[0])
            out.append(math.sqrt(best))
        return np.array(out)

    r = chamfer(a, b, 20, (1, 2))
    dab = directed(sample_surface(a, 20, 1)[0], b)
    dba = directed(sample_surface(b, 20, 2)[0], a)
    assert r.a_to_b == (dab.mean(), math.sqrt(np.mean(dab * dab)))
    assert r.b_to_a == (dba.mean(), math.sqrt(np.mean(dba * dba)))


def test_zero_area_rejected():
    flat = TriMesh([[0, 0, 0], [1, 0, 0], [2, 0, 0]], [[0, 1, 2]])
    with pytest.raises(MetricError, match="zero surface area"):
        chamfer(flat, icosphere(1))
    with pytest.raises(MetricError):
        normal_consistency(icosphere(1), flat)


def test_sampling_is_area_uniform():
    # two triangles, the second with 3x the area
    v = [[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 5], [3, 0, 5], [0, 1, 5]]
    pts, face = sample_surface(TriMesh(v, [[0, 1, 2], [3, 4, 5]]), 40000, 0)
    assert np.mean(face == 1) == pytest.approx(0.75, abs=0.01)
    np.testing.assert_allclose(pts[face == 1, 2], 5.0)


# normal consistency


def test_normal_consistency_examples():
    s = icosphere(3)
    assert normal_consistency(s, s, 5000, 0) == pytest.approx(1.0, abs=1e-6)
    flipped = TriMesh(s.vertices, s.faces[:, ::-1])
    assert normal_consistency(s, flipped, 5000, 0) == pytest.approx(-1.0, abs=1e-6)
    assert normal_consistency(s, icosphere(3, 1.05), 5000, 0) > 0.99


# silhouettes


def test_iou_self_dataset_is_one():
    m = random_blob(level=2, seed=8)
    res = silhouette_iou(m, render_dataset(m, views=6, size=48))
    assert res.per_view == [1.0] * 6 and res.mean == 1.0 and res.empty_union == []


def test_iou_squares():
    a = np.zeros((10, 10))
    b = np.zeros((10, 10))
    a[2:6, 2:6] = 1
    b[2:6, 4:8] = 1
    assert mask_iou(a, b) == (pytest.approx(1 / 3), False)
    c = np.zeros((10, 10))
    c[7:9, 7:9] = 1
    assert mask_iou(a, c) == (0.0, False)
    assert mask_iou(np.zeros((4, 4)), np.zeros((4, 4))) == (1.0, True)


def test_iou_flags_empty_views():
    m = icosphere(2, 0.5)
    ds = render_dataset(m, views=4, size=32)
    far = TriMesh(m.vertices + [0, 0, 50], m.faces)  # behind every camera
    for v in ds.views:
        v.mask[:] = 0
    res = silhouette_iou(far, ds)
    assert res.per_view == [1.0] * 4 and res.empty_union == [0, 1, 2, 3]


# clip score


class FixedProvider(EmbeddingProvider):
    """Looks up embeddings by the image's first pixel value."""

    dim = 2

    def __init__(self, table):
        self.table = table

    def embed(self, image):
        return np.asarray(self.table[float(np.asarray(image).flat[0])], float)


def test_clip_identical_views():
    img = np.random.default_rng(0).uniform(0, 1, (32, 32, 3))
    assert clip_score(img, [img, img.copy(), img], ToyEmbeddingProvider()) == 1.0


def test_clip_orthogonal_and_mean():
    p = FixedProvider({0.0: (1, 0), 1.0: (0, 3), 2.0: (1, math.sqrt(3)), 3.0: (5, 0)})
    img = lambda k: np.full((2, 2), float(k))
    assert clip_score(img(0), [img(1), img(1)], p) == 0.0
    assert clip_score(img(0), [img(3), img(2), img(1)], p) == pytest.approx(0.5, abs=1e-15)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.01, 100))
def test_clip_scale_and_order_invariant(seed, scale):
    rng = np.random.default_rng(seed)
    vecs = rng.standard_normal((5, 8))
    table = {float(k): vecs[k] for k in range(5)}
    scaled = dict(table)
    scaled[2.0] = scale * vecs[2]
    img = lambda k: np.full((2, 2), float(k))
    views = [img(k) for k in range(1, 5)]
    a = clip_score(img(0), views, FixedProvider(table))
    b = clip_score(img(0), views[::-1], FixedProvider(scaled))
    assert a == pytest.approx(b, abs=1e-15)
    assert -1 <= a <= 1


def test_clip_zero_norm_names_offenders():
    p = FixedProvider({0.0: (0, 0), 1.0: (1, 0), 2.0: (0, 0)})
    img = lambda k: np.full((2, 2), float(k))
    with pytest.raises(ClipScoreError, match="prompt, view 1") as info:
        clip_score(img(0), [img(1), img(2)], p)
    assert info.value.offenders == ["prompt", "view 1"]
    with pytest.raises(ValueError, match="at least one view"):
        clip_score(img(1), [], p)


def test_toy_provider():
    toy = ToyEmbeddingProvider()
    rng = np.random.default_rng(1)
    e = toy.embed(rng.uniform(0, 1, (64, 48, 3)))
    assert e.shape == (toy.dim,) == (768,)
    assert np.linalg.norm(e) == pytest.approx(1.0)
    assert not toy.embed(np.full((20, 20, 3), 0.4)).any()
    gray = rng.uniform(0, 1, (16, 16))
    np.testing.assert_allclose(toy.embed(gray), toy.embed(np.repeat(gray[..., None], 3, axis=2)))
    with pytest.raises(ValueError, match="image"):
        toy.embed(np.zeros((4, 4, 2)))


# report


def test_report_round_trip(tmp_path):
    r = EvalReport(chamfer_mean=0.01, chamfer_rms=0.02, normal_consistency=0.97, iou_per_view=[1.0, 0.9], iou_mean=0.95, samples=100, seed=3)
    r.write(tmp_path / "r.json")
    assert json.loads((tmp_path / "r.json").read_text())["chamfer_rms"] == 0.02
    table = r.table()
    assert "chamfer rms" in table and "clip score" not in table


@pytest.mark.parametrize("kwargs", [{"iou_per_view": [1.2]}, {"clip_score": -1.5}, {"chamfer_mean": -1, "chamfer_rms": 0}])
def test_report_invariants(kwargs, tmp_path):
    with pytest.raises(ValueError):
        EvalReport(**kwargs).write(tmp_path / "r.json")
