"""Per-vertex color fitting on frozen geometry."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..dataset import OrbitDataset
from ..geometry import TriMesh
from ..raster import RasterConfig, render
from .adam import Adam, log_linear
from .carve import CarveError

log = logging.getLogger(__name__)

INIT_COLOR = 0.5
# light momentum: with 0.9 the first steps overshoot and the loss climbs
# back for a few iterations; colors need no long memory
COLOR_BETAS = (0.5, 0.999)


@dataclass
class ColorReport:
    squared: list[float] = field(default_factory=list)
    unsquared: list[float] = field(default_factory=list)
    visible: int = 0

    def to_dict(self) -> dict:
        return {"squared": self.squared, "unsquared": self.unsquared, "visible_vertices": self.visible}


@dataclass(eq=False)
class _Pixels:
    """All covered, masked pixels of all views, flattened."""

    corners: np.ndarray  # (P, 3) vertex ids
    weights: np.ndarray  # (P, 3) barycentrics
    target: np.ndarray  # (P, 3)
    mask: np.ndarray  # (P,)
    view: np.ndarray  # (P,)


def _gather(mesh: TriMesh, dataset: OrbitDataset) -> _Pixels:
    raster = RasterConfig(mode="hard")
    parts = []
    for k, view in enumerate(dataset.views):
        out = render(mesh, view.camera, raster)
        sel = out.covered & (view.mask > 0)
        fid = out.face_id[sel]
        parts.append((mesh.faces[fid], out.bary[sel], view.rgb[sel], view.mask[sel], np.full(len(fid), k)))
    return _Pixels(*(np.concatenate([p[i] for p in parts]) for i in range(5)))


def fit_colors(
    mesh: TriMesh,
    dataset: OrbitDataset,
    iterations: int = 200,
    lr_start: float = 5e-2,
    lr_end: float = 5e-4,
    betas=COLOR_BETAS,
    seed: int | None = None,
    jitter: float = 0.0,
) -> tuple[TriMesh, ColorReport]:
    """Fit per-vertex RGB to the dataset images with geometry held fixed.

    Colors start at 0.5 (plus optional seeded jitter) and follow Adam on
    ``sum M ||I - I^||^2`` over hard renders. Vertices never seen keep
    their initial value. Returns the colored mesh, colors clamped to [0, 1].
    """
    if iterations < 0:
        raise ValueError("iterations must be >= 0")
    px = _gather(mesh, dataset)
    n = mesh.n_vertices
    colors = np.full((n, 3), INIT_COLOR)
    if jitter:
        colors += np.random.default_rng(seed).uniform(-jitter, jitter, size=colors.shape)
    report = ColorReport(visible=int(np.count_nonzero(np.bincount(px.corners.ravel(), minlength=n))))
    adam = Adam(colors.shape, betas)
    flat = px.corners.ravel()
    for it in range(iterations + 1):
        pred = np.einsum("pk,pki->pi", px.weights, colors[px.corners])
        resid = px.target - pred
        sq = np.sum(resid * resid, axis=1)
        loss = float(np.sum(px.mask * sq))
        if not np.isfinite(loss):
            bad = px.view[~np.isfinite(sq)]
            view = int(bad[0]) if len(bad) else None
            raise CarveError(f"non-finite color loss at iteration {it}, view {view}", it, view)
        report.squared.append(loss)
        report.unsquared.append(float(np.sum(px.mask * np.sqrt(sq))))
        if it == iterations:
            break
        g_pix = -2.0 * px.mask[:, None] * resid  # (P, 3)
        g_corner = (px.weights[:, :, None] * g_pix[:, None, :]).reshape(-1, 3)
        grad = np.stack([np.bincount(flat, weights=g_corner[:, c], minlength=n) for c in range(3)], axis=1)
        colors = adam.step(colors, grad, log_linear(lr_start, lr_end, it, iterations))
    log.info("color fit: loss %.4g -> %.4g over %d visible vertices", report.squared[0], report.squared[-1], report.visible)
    return mesh.with_colors(np.clip(colors, 0.0, 1.0)), report
