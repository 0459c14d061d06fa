import numpy as np
import pytest

from orbitcarve import _accel
from orbitcarve.dataset import generate_dataset
from orbitcarve.geometry import Camera, TriMesh
from orbitcarve.init import OrbitRig
from orbitcarve.primitives import icosphere, make_primitive

BACKENDS = ["numba", "numpy"] if _accel.HAVE_NUMBA else ["numpy"]


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def front_camera(size=64, distance=3.0, fov_px=None):
    f = fov_px if fov_px is not None else 1.2 * size
    return Camera.look_at([0.0, 0.0, distance], [0, 0, 0], [0, 1, 0], f, f, size / 2, size / 2, size, size)


def random_blob(level=2, radius=0.8, noise=0.1, seed=0, colors=True):
    """Star-shaped perturbed icosphere with random colors."""
    rng = np.random.default_rng(seed)
    m = icosphere(level, radius)
    v = m.vertices * (1 + noise * rng.standard_normal((m.n_vertices, 1)))
    c = rng.uniform(0, 1, (m.n_vertices, 3)) if colors else None
    return TriMesh(v, m.faces, c)


@pytest.fixture(scope="session")
def sphere_dataset(tmp_path_factory):
    """Small 8-view sphere dataset on disk (64 px)."""
    out = tmp_path_factory.mktemp("sphere_ds")
    mesh = make_primitive("sphere", 3)
    ds = generate_dataset(mesh, OrbitRig(views=8, width=64, height=64), out, "sphere")
    return mesh, ds


def render_dataset(mesh, views=8, size=64, elevation=15.0, name="mem"):
    """In-memory dataset of hard renders of ``mesh`` on an orbit."""
    from orbitcarve.dataset import OrbitDataset, ViewRecord
    from orbitcarve.init import build_orbit_cameras
    from orbitcarve.raster import RasterConfig, render

    rig = OrbitRig(views=views, width=size, height=size, elevation=elevation)
    records = []
    for cam in build_orbit_cameras(rig):
        out = render(mesh, cam, RasterConfig(mode="hard"))
        records.append(ViewRecord(out.color, out.mask, out.normal, cam))
    return OrbitDataset(name, size, size, records, rig)
