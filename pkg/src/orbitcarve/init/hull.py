from __future__ import annotations

import numpy as np

from ..geometry import Camera
from .grid import ScalarGrid


def bilinear(image: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Sample a 2-D image at pixel coordinates (centers at integer + 0.5).

    Samples whose footprint leaves the image return 0.
    """
    h, w = image.shape
    u = x - 0.5
    v = y - 0.5
    inside = (u >= 0) & (v >= 0) & (u <= w - 1) & (v <= h - 1)
    u = np.where(inside, u, 0.0)
    v = np.where(inside, v, 0.0)
    c0 = np.minimum(np.floor(u).astype(np.int64), max(w - 2, 0))
    r0 = np.minimum(np.floor(v).astype(np.int64), max(h - 2, 0))
    c1 = np.minimum(c0 + 1, w - 1)
    r1 = np.minimum(r0 + 1, h - 1)
    tu = u - c0
    tv = v - r0
    top = image[r0, c0] * (1 - tu) + image[r0, c1] * tu
    bottom = image[r1, c0] * (1 - tu) + image[r1, c1] * tu
    return np.where(inside, top * (1 - tv) + bottom * tv, 0.0)


def visual_hull(masks, cameras: list[Camera], resolution: int = 96, lo: float = -1.0, hi: float = 1.0) -> ScalarGrid:
    """Soft occupancy: minimum over views of the mask sampled at each voxel.

    The grid holds ``resolution^3`` voxel centers spanning ``[lo, hi]^3``;
    voxels that project behind a camera or outside an image get 0.
    """
    if len(masks) != len(cameras):
        raise ValueError(f"{len(masks)} masks but {len(cameras)} cameras")
    if len(masks) < 2:
        raise ValueError("visual hull needs at least 2 views")
    grid = ScalarGrid.box(resolution, lo, hi)
    pts = grid.points().reshape(-1, 3)
    occ = np.ones(len(pts))
    for mask, cam in zip(masks, cameras):
        mask = np.asarray(mask, dtype=np.float64)
        if mask.shape != (cam.height, cam.width):
            raise ValueError(f"mask shape {mask.shape} does not match camera {cam.width}x{cam.height}")
        xy, _, valid = cam.project(pts)
        sample = np.where(valid, bilinear(mask, xy[:, 0], xy[:, 1]), 0.0)
        np.minimum(occ, sample, out=occ)
    grid.values = occ.reshape((resolution,) * 3)
    return grid
