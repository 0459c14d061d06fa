"""Initial mesh and cameras: orbit rig, visual hull, Poisson, marching cubes."""

from .grid import ScalarGrid
from .hull import visual_hull
from .marching_cubes import EmptyMeshError, marching_cubes
from .orbit import OrbitRig, build_orbit_cameras
from .poisson import PoissonError, poisson_reconstruct

__all__ = ["EmptyMeshError", "OrbitRig", "PoissonError", "poisson_reconstruct", "ScalarGrid", "build_orbit_cameras", "marching_cubes", "visual_hull"]
