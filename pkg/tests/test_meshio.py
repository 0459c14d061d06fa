import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from orbitcarve.geometry import Camera, MeshError, OrientedPointCloud, TriMesh
from orbitcarve.meshio import (
    MeshFormatError,
    load_cameras,
    load_mesh,
    load_point_cloud,
    quantize_colors,
    save_cameras,
    save_mesh,
    save_point_cloud,
)
from orbitcarve.primitives import cube


def random_mesh(rng, n=1000, colors=True):
    v = rng.normal(size=(n, 3))
    f = np.stack([rng.permutation(n)[:3] for _ in range(2 * n)])
    return TriMesh(v, f, rng.uniform(0, 1, (n, 3)) if colors else None)


def test_obj_minimal(tmp_path):
    p = tmp_path / "tri.obj"
    p.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n")
    m = load_mesh(p)
    assert (m.n_vertices, m.n_faces, m.colors) == (3, 1, None)


def test_obj_index_error_names_face(tmp_path):
    p = tmp_path / "bad.obj"
    p.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 5\n")
    with pytest.raises(MeshError, match="face 0"):
        load_mesh(p)


def test_obj_parse_error_names_line(tmp_path):
    p = tmp_path / "bad.obj"
    p.write_text("v 0 0 0\nv 1 0\n")
    with pytest.raises(MeshFormatError, match=":2:"):
        load_mesh(p)


def test_obj_vertex_colors_and_ignored_directives(tmp_path):
    p = tmp_path / "c.obj"
    p.write_text("o thing\nv 0 0 0 1 0 0\nv 1 0 0 0 1 0\nv 0 1 0 0 0 1\nvn 0 0 1\nf 1//1 2//1 3//1\n")
    with pytest.warns(UserWarning, match="ignored"):
        m = load_mesh(p)
    np.testing.assert_array_equal(m.colors, np.eye(3))


@pytest.mark.parametrize("ext", [".obj", ".ply"])
def test_roundtrip_random_mesh(tmp_path, rng, ext):
    m = random_mesh(rng)
    save_mesh(m, tmp_path / f"m{ext}")
    back = load_mesh(tmp_path / f"m{ext}")
    np.testing.assert_array_equal(back.faces, m.faces)
    if ext == ".obj":
        np.testing.assert_array_equal(back.vertices, m.vertices)
        np.testing.assert_array_equal(back.colors, m.colors)
    else:
        np.testing.assert_array_equal(back.vertices, m.vertices.astype(np.float32))
        np.testing.assert_array_equal(back.colors, quantize_colors(m.colors) / 255.0)


def test_ply_is_binary_little_endian_with_colors(tmp_path):
    m = cube().with_colors(np.full((8, 3), 0.5))
    save_mesh(m, tmp_path / "c.ply")
    data = (tmp_path / "c.ply").read_bytes()
    header = data[: data.index(b"end_header")].decode()
    assert "format binary_little_endian 1.0" in header
    assert "element vertex 8" in header and "element face 12" in header
    assert all(f"property uchar {c}" in header for c in ("red", "green", "blue"))
    assert load_mesh(tmp_path / "c.ply").colors[0, 0] == 128 / 255


def test_ply_save_is_byte_stable(tmp_path, rng):
    m = random_mesh(rng, 100)
    save_mesh(m, tmp_path / "a.ply")
    save_mesh(m, tmp_path / "b.ply")
    assert (tmp_path / "a.ply").read_bytes() == (tmp_path / "b.ply").read_bytes()


def test_ascii_ply_rejected(tmp_path):
    p = tmp_path / "a.ply"
    p.write_text("ply\nformat ascii 1.0\nelement vertex 0\nend_header\n")
    with pytest.raises(MeshFormatError, match="ascii|binary"):
        load_mesh(p)


def test_truncated_ply_reports_offset(tmp_path):
    save_mesh(cube(), tmp_path / "c.ply")
    data = (tmp_path / "c.ply").read_bytes()
    (tmp_path / "t.ply").write_bytes(data[:-10])
    with pytest.raises(MeshFormatError, match="byte"):
        load_mesh(tmp_path / "t.ply")


def test_unknown_extension(tmp_path):
    with pytest.raises(MeshFormatError):
        save_mesh(cube(), tmp_path / "c.stl")


@pytest.mark.parametrize("c, q", [(0.5, 128), (0.0, 0), (1.0, 255), (0.2, 51), (1 / 255 * 0.5, 1)])
def test_quantize_colors(c, q):
    assert quantize_colors(np.array([c]))[0] == q


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=30))
def test_quantize_within_half_step(values):
    c = np.array(values)
    assert np.abs(quantize_colors(c) / 255.0 - c).max() <= 0.5 / 255 + 1e-12


def test_point_cloud_roundtrip(tmp_path, rng):
    n = rng.normal(size=(200, 3))
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    cloud = OrientedPointCloud(rng.normal(size=(200, 3)), n)
    save_point_cloud(cloud, tmp_path / "p.ply")
    back = load_point_cloud(tmp_path / "p.ply")
    np.testing.assert_allclose(back.points, cloud.points, atol=1e-6)
    np.testing.assert_allclose(back.normals, cloud.normals, atol=1e-6)


def test_point_cloud_needs_normals(tmp_path):
    save_mesh(cube(), tmp_path / "c.ply")
    with pytest.raises(MeshFormatError, match="nx"):
        load_point_cloud(tmp_path / "c.ply")


def test_cameras_roundtrip(tmp_path):
    cams = [Camera.look_at([0, 0, 3 + k], [0, 0, 0], [0, 1, 0], 50, 50, 32, 32, 64, 64) for k in range(3)]
    save_cameras(cams, tmp_path / "cams.json")
    back = load_cameras(tmp_path / "cams.json")
    for a, b in zip(cams, back):
        np.testing.assert_array_equal(a.rotation, b.rotation)
        np.testing.assert_array_equal(a.translation, b.translation)
        assert (a.fx, a.cx, a.width) == (b.fx, b.cx, b.width)
