import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from orbitcarve.geometry import (
    Camera,
    CameraError,
    MeshError,
    Normalization,
    OrientedPointCloud,
    TriMesh,
    check_normal_map,
    mesh_stats,
    project,
    vertex_normals,
)
from orbitcarve.primitives import cube, icosahedron, icosphere, make_primitive, torus


def test_trimesh_rejects_bad_index():
    with pytest.raises(MeshError, match="face 1"):
        TriMesh(np.zeros((3, 3)), [[0, 1, 2], [0, 1, 5]])


def test_trimesh_rejects_repeated_vertex_and_nan():
    with pytest.raises(MeshError, match="repeats"):
        TriMesh(np.eye(3), [[0, 0, 2]])
    with pytest.raises(MeshError, match="finite"):
        TriMesh([[0, 0, np.nan], [1, 0, 0], [0, 1, 0]], [[0, 1, 2]])


@pytest.mark.parametrize("colors", [np.full((3, 3), 1.5), np.ones((2, 3))])
def test_trimesh_rejects_bad_colors(colors):
    with pytest.raises(MeshError):
        TriMesh(np.eye(3), [[0, 1, 2]], colors)


def test_camera_invariants():
    with pytest.raises(CameraError, match="focal"):
        Camera(0, 1, 1, 1, 4, 4)
    with pytest.raises(CameraError, match="principal"):
        Camera(1, 1, 4, 1, 4, 4)
    with pytest.raises(CameraError, match="rotation"):
        Camera(1, 1, 1, 1, 4, 4, np.diag([1.0, 1.0, -1.0]))


def test_project_principal_ray():
    cam = Camera(100, 100, 64, 64, 128, 128)
    assert project(cam, (0, 0, 2)) == (64.0, 64.0, 2.0, True)
    assert project(cam, (1, 0, 2))[:3] == (114.0, 64.0, 2.0)


def test_project_flags_points_behind_near_plane():
    cam = Camera(100, 100, 64, 64, 128, 128)
    *_, z, valid = project(cam, (0, 0, -1))
    assert z == -1.0 and not valid


def test_project_matches_homogeneous_pipeline(rng):
    for _ in range(20):
        R = Rotation.random(random_state=rng.integers(1 << 31)).as_matrix()
        t = rng.normal(size=3)
        cam = Camera(80 + 40 * rng.random(), 70, 30, 20, 64, 48, R, t)
        p = rng.normal(size=3) + R.T @ np.array([0, 0, 5.0]) - R.T @ t
        P = np.zeros((3, 4))
        P[:, :3], P[:, 3] = R, t
        h = cam.intrinsics @ P @ np.append(p, 1.0)
        x, y, z, valid = project(cam, p)
        assert valid
        np.testing.assert_allclose([x, y, z], [h[0] / h[2], h[1] / h[2], h[2]], rtol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_project_equivariant_under_world_rotation(seed):
    rng = np.random.default_rng(seed)
    R = Rotation.random(random_state=seed).as_matrix()
    Q = Rotation.random(random_state=seed + 1).as_matrix()
    t = np.array([0.1, -0.2, 4.0])
    cam = Camera(90, 90, 32, 32, 64, 64, R, t)
    rotated = Camera(90, 90, 32, 32, 64, 64, R @ Q.T, t)
    p = rng.normal(size=(10, 3))
    a, za, _ = cam.project(p)
    b, zb, _ = rotated.project(p @ Q.T)
    np.testing.assert_allclose(a, b, atol=1e-9)
    np.testing.assert_allclose(za, zb, atol=1e-9)


def test_look_at_convention():
    cam = Camera.look_at([0, 0, 3], [0, 0, 0], [0, 1, 0], 50, 50, 32, 32, 64, 64)
    # world up projects above the image center (image y grows downward)
    x, y, _, _ = project(cam, (0, 0.5, 0))
    assert x == pytest.approx(32) and y < 32
    np.testing.assert_allclose(cam.center, [0, 0, 3], atol=1e-12)


def test_vertex_normals_tetrahedron():
    v = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=float)
    f = np.array([[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]])
    m = TriMesh(v, f)
    n = vertex_normals(m)
    fn = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
    for i in range(4):
        s = fn[(f == i).any(axis=1)].sum(axis=0)
        np.testing.assert_allclose(n[i], s / np.linalg.norm(s), atol=1e-12)
    # regular tetrahedron: vertex normals point along the vertex directions
    np.testing.assert_allclose(n, v / np.sqrt(3), atol=1e-12)


def test_vertex_normals_flat_square():
    v = np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]], dtype=float)
    n = vertex_normals(TriMesh(v, [[0, 1, 2], [0, 2, 3]]))
    np.testing.assert_allclose(n, np.tile([0, 0, 1.0], (4, 1)))


def test_vertex_normals_icosphere_accuracy():
    m = icosphere(3)
    n = vertex_normals(m)
    exact = m.vertices / np.linalg.norm(m.vertices, axis=1, keepdims=True)
    angle = np.degrees(np.arccos(np.clip(np.sum(n * exact, axis=1), -1, 1)))
    assert angle.max() < 2.0
    np.testing.assert_allclose(np.linalg.norm(n, axis=1), 1.0, atol=1e-6)


def test_vertex_normals_isolated_vertex_warns():
    v = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [5, 5, 5]], dtype=float)
    with pytest.warns(UserWarning, match="isolated"):
        n = vertex_normals(TriMesh(v, [[0, 1, 2]]))
    np.testing.assert_array_equal(n[3], [0, 0, 1])


@pytest.mark.parametrize(
    "mesh, chi",
    [(cube(), 2), (icosahedron(), 2), (icosphere(2), 2), (torus(2), 0), (make_primitive("capsule", 2), 2)],
    ids=["cube", "icosahedron", "icosphere", "torus", "capsule"],
)
def test_euler_characteristic(mesh, chi):
    assert mesh_stats(mesh).euler == chi


def test_mesh_stats_cube_and_icosahedron():
    s = mesh_stats(cube())
    assert (s.n_vertices, s.n_faces) == (8, 12)
    assert s.area == pytest.approx(6.0)
    s = mesh_stats(icosahedron())
    assert (s.n_vertices, s.n_edges, s.n_faces) == (12, 30, 20)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_euler_invariant_under_vertex_reordering(seed):
    m = icosphere(1)
    perm = np.random.default_rng(seed).permutation(m.n_vertices)
    inv = np.argsort(perm)
    shuffled = TriMesh(m.vertices[perm], inv[m.faces])
    assert mesh_stats(shuffled).euler == mesh_stats(m).euler == 2


def test_point_cloud_requires_unit_normals():
    with pytest.raises(ValueError, match="unit"):
        OrientedPointCloud(np.zeros((2, 3)), [[1, 0, 0], [0, 2, 0]])
    with pytest.raises(ValueError, match="normals"):
        OrientedPointCloud(np.zeros((2, 3)), [[1, 0, 0]])


def test_check_normal_map_under_mask():
    n = np.zeros((2, 2, 3))
    n[..., 2] = 1
    mask = np.ones((2, 2))
    check_normal_map(n, mask)
    n[0, 0] = [0, 0, 0.9]
    with pytest.raises(ValueError):
        check_normal_map(n, mask)
    mask[0, 0] = 0
    check_normal_map(n, mask)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_normalization_roundtrip(seed):
    rng = np.random.default_rng(seed)
    p = rng.normal(size=(50, 3)) * rng.uniform(0.1, 10) + rng.normal(size=3) * 5
    norm = Normalization.fit(p)
    q = norm.apply(p)
    assert np.abs(q).max() == pytest.approx(1.0)
    np.testing.assert_allclose(norm.invert(q), p, atol=1e-9 * np.abs(p).max())


def test_normalized_camera_sees_same_pixels():
    m = icosphere(1).transformed(3.0, (1, 2, 3))
    cam = Camera.look_at([1, 2, 15], [1, 2, 3], [0, 1, 0], 60, 60, 32, 32, 64, 64)
    norm = Normalization.fit(m.vertices)
    a, _, _ = cam.project(m.vertices)
    b, _, _ = norm.apply_camera(cam).project(norm.apply(m.vertices))
    np.testing.assert_allclose(a, b, atol=1e-9)
