from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from ..geometry import Camera

# frame count of the orbit videos this pipeline consumes
DEFAULT_VIEWS = 81


@dataclass(frozen=True)
class OrbitRig:
    """Cameras on a horizontal circle at fixed elevation, looking at ``center``.

    Angles are in degrees. Azimuth 0 places the camera on ``+z``; azimuth
    increases towards ``+x``.
    """

    radius: float = 3.0
    elevation: float = 0.0
    azimuth_start: float = 0.0
    center: tuple = (0.0, 0.0, 0.0)
    fov_y: float = 40.0
    views: int = DEFAULT_VIEWS
    width: int = 256
    height: int = 256

    def __post_init__(self) -> None:
        if not self.radius > 0:
            raise ValueError("radius must be > 0")
        if self.views < 2:
            raise ValueError("views must be ≥ 2")
        if not 0 < self.fov_y < 180:
            raise ValueError("fov_y must be in (0, 180) degrees")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image size must be positive")
        if abs(self.elevation) >= 90:
            raise ValueError("elevation must be in (-90, 90) degrees")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))

    @property
    def focal(self) -> float:
        return 0.5 * self.height / math.tan(math.radians(self.fov_y) / 2.0)

    def position(self, k: int) -> np.ndarray:
        theta = math.radians(self.azimuth_start + 360.0 * k / self.views)
        phi = math.radians(self.elevation)
        offset = np.array([math.cos(phi) * math.sin(theta), math.sin(phi), math.cos(phi) * math.cos(theta)])
        return np.asarray(self.center) + self.radius * offset

    def to_dict(self) -> dict:
        d = asdict(self)
        d["center"] = list(self.center)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> OrbitRig:
        d = dict(d)
        if "center" in d:
            d["center"] = tuple(d["center"])
        return cls(**d)


def build_orbit_cameras(rig: OrbitRig) -> list[Camera]:
    f = rig.focal
    return [
        Camera.look_at(
            rig.position(k),
            rig.center,
            (0.0, 1.0, 0.0),
            f,
            f,
            rig.width / 2.0,
            rig.height / 2.0,
            rig.width,
            rig.height,
        )
        for k in range(rig.views)
    ]
