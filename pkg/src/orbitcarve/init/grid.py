from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(eq=False)
class ScalarGrid:
    """Scalar samples on a regular ``N^3`` lattice.

    ``values[i, j, k]`` sits at ``origin + spacing * (i, j, k)``.
    """

    origin: np.ndarray
    spacing: float
    values: np.ndarray

    def __post_init__(self) -> None:
        self.origin = np.asarray(self.origin, dtype=np.float64).reshape(3)
        self.spacing = float(self.spacing)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 3:
            raise ValueError(f"grid values must be 3-D, got shape {self.values.shape}")
        if not self.spacing > 0:
            raise ValueError("grid spacing must be > 0")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("grid values must be finite")

    @property
    def resolution(self) -> int:
        return self.values.shape[0]

    @classmethod
    def box(cls, resolution: int, lo: float = -1.0, hi: float = 1.0, values=None) -> ScalarGrid:
        """Cell-centered lattice of ``resolution`` samples spanning ``[lo, hi]^3``."""
        h = (hi - lo) / resolution
        if values is None:
            values = np.zeros((resolution,) * 3)
        return cls(np.full(3, lo + 0.5 * h), h, values)

    def points(self) -> np.ndarray:
        n = self.values.shape
        axes = [self.origin[a] + self.spacing * np.arange(n[a]) for a in range(3)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def sample(self, points: np.ndarray) -> np.ndarray:
        """Trilinear interpolation; points outside are clamped to the border."""
        u = (np.asarray(points, dtype=np.float64) - self.origin) / self.spacing
        return trilinear(self.values, u)

    def smoothed(self) -> ScalarGrid:
        """One pass of a 3x3x3 box filter (zero padding)."""
        from scipy.ndimage import uniform_filter

        return ScalarGrid(self.origin, self.spacing, uniform_filter(self.values, size=3, mode="constant"))


def trilinear(values: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Sample ``values`` at fractional index coordinates ``u (P, 3)``."""
    shape = np.array(values.shape)
    u = np.clip(u, 0.0, shape - 1.0)
    i0 = np.minimum(np.floor(u).astype(np.int64), shape - 2)
    i0 = np.maximum(i0, 0)
    t = u - i0
    out = np.zeros(len(u))
    for dx in (0, 1):
        wx = t[:, 0] if dx else 1.0 - t[:, 0]
        for dy in (0, 1):
            wy = t[:, 1] if dy else 1.0 - t[:, 1]
            for dz in (0, 1):
                wz = t[:, 2] if dz else 1.0 - t[:, 2]
                out += wx * wy * wz * values[i0[:, 0] + dx, i0[:, 1] + dy, i0[:, 2] + dz]
    return out
