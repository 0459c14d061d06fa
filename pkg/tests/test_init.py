import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from orbitcarve.geometry import OrientedPointCloud, is_watertight, mesh_stats
from orbitcarve.init import (
    EmptyMeshError,
    OrbitRig,
    PoissonError,
    ScalarGrid,
    build_orbit_cameras,
    marching_cubes,
    poisson_reconstruct,
    visual_hull,
)
from orbitcarve.primitives import icosphere
from orbitcarve.raster import RasterConfig, render


def rot_y(deg):
    a = np.radians(deg)
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]])


def signed_volume(mesh):
    v = mesh.vertices[mesh.faces]
    return np.einsum("ij,ij->i", v[:, 0], np.cross(v[:, 1], v[:, 2])).sum() / 6


# orbit rig


def test_quarter_turn_positions():
    cams = build_orbit_cameras(OrbitRig(radius=2, views=4, elevation=0, azimuth_start=0))
    expected = [(0, 0, 2), (2, 0, 0), (0, 0, -2), (-2, 0, 0)]
    for cam, pos in zip(cams, expected):
        np.testing.assert_allclose(cam.center, pos, atol=1e-12)


def test_default_frame_count():
    assert OrbitRig().views == 81
    assert len(build_orbit_cameras(OrbitRig(views=81))) == 81


@pytest.mark.parametrize("elevation", [-30.0, 0.0, 15.0, 60.0])
@pytest.mark.parametrize("center", [(0, 0, 0), (0.3, -0.2, 0.5)])
def test_cameras_look_at_center(elevation, center):
    rig = OrbitRig(views=7, elevation=elevation, center=center, azimuth_start=10)
    for cam in build_orbit_cameras(rig):
        cam.validate()
        np.testing.assert_allclose(cam.rotation @ cam.rotation.T, np.eye(3), atol=1e-12)
        d = cam.rotation @ (np.asarray(center) - cam.center)
        np.testing.assert_allclose(d, [0, 0, np.linalg.norm(d)], atol=1e-9)
        assert cam.center[1] - center[1] == pytest.approx(rig.radius * np.sin(np.radians(elevation)))
        assert cam.fx == cam.fy == pytest.approx(rig.focal)
        assert (cam.cx, cam.cy) == (rig.width / 2, rig.height / 2)


@pytest.mark.parametrize("views", [2, 5, 36, 81])
def test_consecutive_cameras_rotate_by_step(views):
    rig = OrbitRig(views=views, elevation=25, center=(0.1, 0.2, -0.3))
    cams = build_orbit_cameras(rig)
    q = rot_y(360.0 / views)
    c = np.asarray(rig.center)
    for a, b in zip(cams, cams[1:]):
        np.testing.assert_allclose(b.center - c, q @ (a.center - c), atol=1e-9)
        np.testing.assert_allclose(b.rotation, a.rotation @ q.T, atol=1e-9)


@pytest.mark.parametrize("kwargs", [{"views": 1}, {"radius": 0}, {"fov_y": 180}, {"fov_y": 0}])
def test_rig_invariants(kwargs):
    with pytest.raises(ValueError):
        OrbitRig(**kwargs)


def test_rig_dict_round_trip():
    rig = OrbitRig(radius=2.5, elevation=10, center=(1, 2, 3), views=12, width=64, height=48)
    assert OrbitRig.from_dict(rig.to_dict()) == rig


# visual hull


@pytest.fixture(scope="module")
def sphere_views():
    cams = build_orbit_cameras(OrbitRig(views=36, width=128, height=128))
    sphere = icosphere(4)
    return [render(sphere, c, RasterConfig(mode="hard")).mask for c in cams], cams


def test_hull_volume_of_sphere(sphere_views):
    masks, cams = sphere_views
    g = visual_hull(masks, cams, 64)
    vol = np.count_nonzero(g.values > 0.5) * g.spacing**3
    assert vol == pytest.approx(4 / 3 * np.pi, rel=0.05)


def test_hull_zero_mask_clears_grid(sphere_views):
    masks, cams = sphere_views
    masks = list(masks[:6])
    masks[3] = np.zeros_like(masks[3])
    assert not visual_hull(masks, cams[:6], 32).values.any()


def test_hull_monotone_in_views(sphere_views):
    masks, cams = sphere_views
    prev = visual_hull(masks[:2], cams[:2], 32).values
    for k in (5, 11, 36):
        cur = visual_hull(masks[:k], cams[:k], 32).values
        assert np.all(cur <= prev)
        prev = cur


def test_hull_of_two_squares():
    rig = OrbitRig(views=4, width=64, height=64)
    cams = build_orbit_cameras(rig)[:2]  # front (+z) and side (+x)
    sq = np.zeros((64, 64))
    sq[20:44, 24:40] = 1.0
    g = visual_hull([sq, sq], cams, 40)
    pts = g.points().reshape(-1, 3)
    occ = g.values.ravel()
    inside, margin = np.ones(len(pts), bool), np.full(len(pts), np.inf)
    for cam in cams:
        xy, _, _ = cam.project(pts)
        # distance (px) of the projection to the square boundary, signed positive inside
        dx = np.minimum(xy[:, 0] - 24, 40 - xy[:, 0])
        dy = np.minimum(xy[:, 1] - 20, 44 - xy[:, 1])
        d = np.minimum(dx, dy)
        inside &= d > 0
        margin = np.minimum(margin, np.abs(d))
    clear = margin > 1.0
    assert clear.sum() > 0.9 * len(pts)
    np.testing.assert_array_equal(occ[clear] > 0.5, inside[clear])
    assert set(np.unique(occ[clear])) <= {0.0, 1.0}


def test_hull_count_mismatch(sphere_views):
    masks, cams = sphere_views
    with pytest.raises(ValueError, match="masks"):
        visual_hull(masks[:3], cams[:4], 16)


# poisson


def sphere_cloud(n, seed=0, offset=(0, 0, 0)):
    rng = np.random.default_rng(seed)
    p = rng.standard_normal((n, 3))
    p /= np.linalg.norm(p, axis=1, keepdims=True)
    return OrientedPointCloud(p + np.asarray(offset), p.copy())


@pytest.fixture(scope="module")
def sphere_chi():
    return poisson_reconstruct(sphere_cloud(10_000), 96)


def test_poisson_sphere(sphere_chi):
    mesh = marching_cubes(sphere_chi, 0.0)
    r = np.linalg.norm(mesh.vertices, axis=1)
    assert np.mean(np.abs(r - 1)) < 0.02
    assert is_watertight(mesh)
    assert signed_volume(mesh) > 0  # chi is larger inside, so faces point out


def test_poisson_mean_at_points_is_zero(sphere_chi):
    assert abs(sphere_chi.sample(sphere_cloud(10_000).points).mean()) < 1e-9


def test_poisson_flip_negates():
    cloud = sphere_cloud(2000, seed=1)
    a = poisson_reconstruct(cloud, 32)
    b = poisson_reconstruct(OrientedPointCloud(cloud.points, -cloud.normals), 32)
    scale = np.abs(a.values).max()
    np.testing.assert_allclose(b.values, -a.values, atol=1e-5 * scale)


def test_poisson_translation_equivariant():
    delta = np.array([0.2, -0.15, 0.1])
    a = poisson_reconstruct(sphere_cloud(3000, seed=2), 48)
    b = poisson_reconstruct(sphere_cloud(3000, seed=2, offset=delta), 48)
    np.testing.assert_allclose(b.origin, a.origin + delta, atol=1e-12)
    ma, mb = marching_cubes(a, 0.0), marching_cubes(b, 0.0)
    assert ma.n_vertices == mb.n_vertices
    assert np.abs(mb.vertices - delta - ma.vertices).max() < a.spacing


def test_poisson_permutation_invariant():
    cloud = sphere_cloud(1500, seed=3)
    perm = np.random.default_rng(0).permutation(len(cloud))
    a = poisson_reconstruct(cloud, 32)
    b = poisson_reconstruct(OrientedPointCloud(cloud.points[perm], cloud.normals[perm]), 32)
    np.testing.assert_allclose(b.values, a.values, atol=1e-5 * np.abs(a.values).max())


def test_poisson_errors():
    with pytest.raises(PoissonError, match="at least 100"):
        poisson_reconstruct(sphere_cloud(50), 16)
    with pytest.raises(PoissonError, match="converge"):
        poisson_reconstruct(sphere_cloud(500), 32, max_iter=2)


# marching cubes


def field_grid(fn, n=64, lo=-1.5, hi=1.5):
    g = ScalarGrid.box(n, lo, hi)
    return ScalarGrid(g.origin, g.spacing, fn(g.points()))


def test_mc_sphere_field():
    g = field_grid(lambda p: (p**2).sum(-1) - 1)
    mesh = marching_cubes(g, 0.0)
    assert is_watertight(mesh)
    assert mesh_stats(mesh).euler == 2
    assert np.abs(np.linalg.norm(mesh.vertices, axis=1) - 1).max() < 2 * g.spacing


def test_mc_orientation_outward_when_inside_is_larger():
    mesh = marching_cubes(field_grid(lambda p: 1 - (p**2).sum(-1), 32), 0.0)
    assert signed_volume(mesh) == pytest.approx(4 / 3 * np.pi, rel=0.05)


def test_mc_constant_grid_is_empty():
    with pytest.raises(EmptyMeshError):
        marching_cubes(field_grid(lambda p: np.ones(p.shape[:-1]), 8), 0.0)


@pytest.mark.parametrize("axis", [0, 1, 2])
def test_mc_halfspace_is_planar(axis):
    mesh = marching_cubes(field_grid(lambda p: 0.3 - p[..., axis], 16), 0.0)
    np.testing.assert_allclose(mesh.vertices[:, axis], 0.3, atol=1e-6)


def test_mc_shares_edge_vertices():
    mesh = marching_cubes(field_grid(lambda p: (p**2).sum(-1) - 1, 24), 0.0)
    assert len(np.unique(mesh.vertices, axis=0)) == mesh.n_vertices


@settings(max_examples=15, deadline=None)
@given(
    st.tuples(*[st.floats(-0.3, 0.3)] * 3),
    st.tuples(*[st.floats(0.4, 1.0)] * 3),
    st.floats(-0.2, 0.2),
)
def test_mc_ellipsoids_are_watertight(center, axes, iso):
    c, a = np.asarray(center), np.asarray(axes)
    g = field_grid(lambda p: 1 - (((p - c) / a) ** 2).sum(-1), 20)
    mesh = marching_cubes(g, iso)
    assert is_watertight(mesh)
    assert mesh_stats(mesh).euler == 2
    assert signed_volume(mesh) > 0


def test_mc_torus_genus_one():
    def torus(p):
        q = np.sqrt(p[..., 0] ** 2 + p[..., 2] ** 2) - 0.7
        return 0.3**2 - q**2 - p[..., 1] ** 2

    mesh = marching_cubes(field_grid(torus, 48, -1.2, 1.2), 0.0)
    assert is_watertight(mesh)
    assert mesh_stats(mesh).euler == 0
