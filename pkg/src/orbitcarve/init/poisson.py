"""Dense-grid Poisson surface reconstruction from oriented points."""

from __future__ import annotations

import logging

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg

from ..geometry import OrientedPointCloud
from .grid import ScalarGrid, trilinear

log = logging.getLogger(__name__)

MIN_POINTS = 100


class PoissonError(RuntimeError):
    """Too few points, or the CG solve did not converge."""


def _splat(values_shape, u, weights):
    """Trilinear scatter of ``weights`` at fractional indices ``u``."""
    out = np.zeros(values_shape)
    shape = np.array(values_shape)
    i0 = np.clip(np.floor(u).astype(np.int64), 0, shape - 2)
    t = np.clip(u - i0, 0.0, 1.0)
    flat = out.ravel()
    for dx in (0, 1):
        wx = t[:, 0] if dx else 1.0 - t[:, 0]
        for dy in (0, 1):
            wy = t[:, 1] if dy else 1.0 - t[:, 1]
            for dz in (0, 1):
                wz = t[:, 2] if dz else 1.0 - t[:, 2]
                idx = np.ravel_multi_index((i0[:, 0] + dx, i0[:, 1] + dy, i0[:, 2] + dz), values_shape)
                flat += np.bincount(idx, weights=wx * wy * wz * weights, minlength=flat.size)
    return out


def neg_laplacian(x: np.ndarray, h: float) -> np.ndarray:
    """``-lap(x)`` with the 7-point stencil and zero Dirichlet boundary.

    ``x`` holds interior unknowns only.
    """
    p = np.pad(x, 1)
    out = 6.0 * x
    out -= p[:-2, 1:-1, 1:-1] + p[2:, 1:-1, 1:-1]
    out -= p[1:-1, :-2, 1:-1] + p[1:-1, 2:, 1:-1]
    out -= p[1:-1, 1:-1, :-2] + p[1:-1, 1:-1, 2:]
    return out / (h * h)


def poisson_grid_for(points: np.ndarray, resolution: int, padding: float = 0.25) -> tuple[np.ndarray, float]:
    """Cubic lattice around the points' bounding box, padded on every side."""
    lo, hi = points.min(axis=0), points.max(axis=0)
    center = 0.5 * (lo + hi)
    half = 0.5 * float((hi - lo).max()) * (1.0 + padding)
    if half <= 0:
        raise PoissonError("point cloud has zero extent")
    h = 2.0 * half / (resolution - 1)
    return center - half, h


def poisson_reconstruct(
    cloud: OrientedPointCloud,
    resolution: int = 96,
    tol: float = 1e-6,
    max_iter: int | None = None,
    padding: float = 0.25,
) -> ScalarGrid:
    """Indicator-like field whose zero level set fits the oriented points.

    Normals are splatted into a staggered vector field ``V`` (trilinear
    weights), its divergence is taken with central differences across the
    staggered faces, and ``lap(chi) = -div(V)`` is solved by CG with zero
    Dirichlet boundary. The sign makes ``chi`` larger inside, like an
    indicator. ``chi`` is then shifted so its mean at the input points is 0.
    """
    if len(cloud) < MIN_POINTS:
        raise PoissonError(f"need at least {MIN_POINTS} points, got {len(cloud)}")
    n = int(resolution)
    if n < 4:
        raise PoissonError("resolution must be at least 4")
    max_iter = 10 * n if max_iter is None else max_iter
    origin, h = poisson_grid_for(cloud.points, n, padding)
    u = (cloud.points - origin) / h

    div = np.zeros((n, n, n))
    for axis in range(3):
        shape = [n, n, n]
        shape[axis] = n - 1
        us = u.copy()
        us[:, axis] -= 0.5  # staggered samples sit half a cell along their axis
        comp = _splat(tuple(shape), us, cloud.normals[:, axis])
        below = [slice(None)] * 3
        above = [slice(None)] * 3
        below[axis] = slice(0, n - 1)
        above[axis] = slice(1, n)
        # node i gets (V[i + 1/2] - V[i - 1/2]) / h
        div[tuple(below)] += comp / h
        div[tuple(above)] -= comp / h

    rhs = div[1:-1, 1:-1, 1:-1]
    # -lap(chi) = div(V) is the SPD form of lap(chi) = -div(V)
    shape = rhs.shape
    op = LinearOperator((rhs.size, rhs.size), matvec=lambda x: neg_laplacian(x.reshape(shape), h).ravel())
    iters = 0

    def count(_):
        nonlocal iters
        iters += 1

    flat, _ = cg(op, rhs.ravel(), rtol=tol, atol=0.0, maxiter=max_iter, callback=count)
    chi_in = flat.reshape(shape)
    bnorm = np.linalg.norm(rhs)
    rel = float(np.linalg.norm(rhs - neg_laplacian(chi_in, h)) / bnorm) if bnorm > 0 else 0.0
    if rel > 1.01 * tol:
        raise PoissonError(f"CG did not converge after {iters} iterations (relative residual {rel:.3e})")
    log.debug("poisson CG converged in %d iterations (residual %.2e)", iters, rel)
    chi = np.zeros((n, n, n))
    chi[1:-1, 1:-1, 1:-1] = chi_in
    chi -= trilinear(chi, u).mean()
    return ScalarGrid(origin, h, chi)
