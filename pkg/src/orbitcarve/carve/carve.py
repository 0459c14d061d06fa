"""Mesh carving: Adam on vertex positions against mask and normal targets,
interleaved with remeshing."""

from __future__ import annotations

import io
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from ..dataset import OrbitDataset
from ..geometry import TriMesh, vertex_normals
from ..raster import RasterConfig, render, render_backward_parts, vertex_normals_backward
from .adam import Adam, log_linear
from .losses import mask_view, normal_view, total_loss
from .remesh import remesh

log = logging.getLogger(__name__)

LOG_HEADER = "iter,loss_mask,loss_normal,loss_total,verts"


class CarveError(RuntimeError):
    """Non-finite loss or geometry; names the iteration and view."""

    def __init__(self, message: str, iteration: int, view: int | None = None):
        super().__init__(message)
        self.iteration = iteration
        self.view = view


@dataclass(frozen=True)
class CarveConfig:
    iterations: int = 400
    lr_start: float = 1e-2
    lr_end: float = 1e-4
    betas: tuple[float, float] = (0.9, 0.999)
    remesh_interval: int = 5
    edge_start: float = 0.06
    edge_end: float = 0.02
    edge_fraction: float = 0.8  # share of iterations over which the edge target shrinks
    smoothing: float = 0.1
    render_size: int = 256
    mask_weight: float = 1.0
    normal_weight: float = 1.0
    # the soft edge width anneals log-linearly from the raster sigma to this;
    # None keeps it fixed. Small late sigma limits the silhouette dilation
    # that overlapping small faces cause in the product aggregation.
    sigma_end: float | None = 0.15
    init_remesh_passes: int = 10  # upper bound; stops once the vertex count settles
    threads: int = 1

    def __post_init__(self) -> None:
        if not (isinstance(self.iterations, (int, np.integer)) and self.iterations > 0):
            raise ValueError(f"iterations must be a positive integer, got {self.iterations!r}")
        if not (self.lr_start > 0 and self.lr_end > 0):
            raise ValueError("learning rates must be positive")
        if not all(0 <= b < 1 for b in self.betas) or len(self.betas) != 2:
            raise ValueError(f"betas must be two values in [0, 1), got {self.betas}")
        if self.remesh_interval < 0:
            raise ValueError("remesh_interval must be >= 0 (0 disables remeshing)")
        if not 0 < self.edge_end <= self.edge_start:
            raise ValueError(f"need 0 < edge_end <= edge_start, got {self.edge_end}, {self.edge_start}")
        if not 0 < self.edge_fraction <= 1:
            raise ValueError("edge_fraction must be in (0, 1]")
        if not 0 <= self.smoothing < 1:
            raise ValueError(f"smoothing must be in [0, 1), got {self.smoothing}")
        if self.render_size < 8:
            raise ValueError("render_size must be at least 8")
        if self.mask_weight < 0 or self.normal_weight < 0:
            raise ValueError("loss weights must be non-negative")
        if self.sigma_end is not None and not self.sigma_end > 0:
            raise ValueError("sigma_end must be positive")
        if self.init_remesh_passes < 0 or self.threads < 1:
            raise ValueError("init_remesh_passes must be >= 0 and threads >= 1")

    def learning_rate(self, it: int) -> float:
        return log_linear(self.lr_start, self.lr_end, it, self.iterations)

    def sigma(self, raster: RasterConfig, it: int) -> RasterConfig:
        if self.sigma_end is None:
            return raster
        return replace(raster, sigma=log_linear(raster.sigma, self.sigma_end, it, self.iterations))

    def target_edge(self, it: int) -> float:
        span = max(1.0, self.edge_fraction * self.iterations)
        t = min(it / span, 1.0)
        return self.edge_start + t * (self.edge_end - self.edge_start)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["betas"] = list(self.betas)
        return d


@dataclass
class LossReport:
    iteration: list[int] = field(default_factory=list)
    loss_mask: list[float] = field(default_factory=list)
    loss_normal: list[float] = field(default_factory=list)
    loss_total: list[float] = field(default_factory=list)
    verts: list[int] = field(default_factory=list)
    per_view: list[np.ndarray] = field(default_factory=list)  # (K, 2) mask/normal per view
    remesh: list[dict] = field(default_factory=list)
    final_total: float | None = None

    def record(self, it: int, lm: float, ln: float, lt: float, nv: int, per_view=None) -> None:
        self.iteration.append(it)
        self.loss_mask.append(lm)
        self.loss_normal.append(ln)
        self.loss_total.append(lt)
        self.verts.append(nv)
        if per_view is not None:
            self.per_view.append(per_view)

    @property
    def decreased(self) -> bool:
        """Final total loss is no larger than the first recorded one."""
        if not self.loss_total:
            return True
        last = self.final_total if self.final_total is not None else self.loss_total[-1]
        return last <= self.loss_total[0]

    def to_log(self) -> str:
        buf = io.StringIO()
        buf.write(LOG_HEADER + "\n")
        for row in zip(self.iteration, self.loss_mask, self.loss_normal, self.loss_total, self.verts):
            buf.write(f"{row[0]},{row[1]:.10e},{row[2]:.10e},{row[3]:.10e},{row[4]}\n")
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "schema": LOG_HEADER,
            "iterations": len(self.iteration),
            "first_total": self.loss_total[0] if self.loss_total else None,
            "last_total": self.loss_total[-1] if self.loss_total else None,
            "final_total": self.final_total,
            "decreased": self.decreased,
            "loss_mask": self.loss_mask,
            "loss_normal": self.loss_normal,
            "loss_total": self.loss_total,
            "verts": self.verts,
            "remesh": self.remesh,
        }


def parse_log(text: str) -> dict[str, np.ndarray]:
    lines = text.strip().splitlines()
    if not lines or lines[0] != LOG_HEADER:
        raise ValueError("not a carve loss log")
    rows = np.array([[float(x) for x in ln.split(",")] for ln in lines[1:]]).reshape(-1, 5)
    return {name: rows[:, i] for i, name in enumerate(LOG_HEADER.split(","))}


def evaluate(mesh: TriMesh, dataset: OrbitDataset, raster: RasterConfig, config: CarveConfig, pool=None, grads: bool = True):
    """Loss parts and (optionally) the vertex gradient summed in view order.

    Returns ``(per_view (K, 2), gradient (V, 3) or None)``.
    """

    def one(k):
        view = dataset.views[k]
        out = render(mesh, view.camera, raster)
        lm, gm = mask_view(out.mask, view.mask)
        ln, gn = normal_view(out.normal, view.normal, view.mask)
        if not grads:
            return lm, ln, None
        g, g_vn, _ = render_backward_parts(
            mesh, view.camera, raster,
            grad_mask=config.mask_weight * gm,
            grad_normal=config.normal_weight * gn,
            forward=out,
        )
        return lm, ln, (g, g_vn)

    ks = range(len(dataset))
    results = list(pool.map(one, ks)) if pool is not None else [one(k) for k in ks]
    per_view = np.array([[r[0], r[1]] for r in results])
    if not grads:
        return per_view, None
    grad = np.zeros_like(mesh.vertices)
    g_normals = np.zeros_like(mesh.vertices)
    for _, _, (g, g_vn) in results:  # fixed view order keeps the sum deterministic
        grad += g
        if g_vn is not None:
            g_normals += g_vn
    # the normal pull-back is linear: apply it once to the summed gradient
    grad += vertex_normals_backward(mesh, vertex_normals(mesh), g_normals)
    return per_view, grad


def _check(per_view: np.ndarray, grad: np.ndarray | None, it: int) -> None:
    bad = ~np.isfinite(per_view).all(axis=1)
    if bad.any():
        k = int(np.flatnonzero(bad)[0])
        raise CarveError(f"non-finite loss at iteration {it}, view {k}", it, k)
    if grad is not None and not np.isfinite(grad).all():
        raise CarveError(f"non-finite gradient at iteration {it}", it)


def carve(
    mesh: TriMesh,
    dataset: OrbitDataset,
    config: CarveConfig | None = None,
    raster: RasterConfig | None = None,
    callback=None,
) -> tuple[TriMesh, LossReport]:
    """Refine ``mesh`` so its soft silhouettes and normals match ``dataset``.

    Every iteration renders all views, sums the loss gradients in view
    order and takes one Adam step; every ``remesh_interval`` iterations the
    mesh is remeshed towards the scheduled edge length and the Adam moments
    follow the vertices. ``callback(it, mesh, report)`` runs after each step.
    """
    config = config or CarveConfig()
    raster = raster or RasterConfig(mode="soft")
    if raster.mode != "soft":
        raise ValueError("carving needs soft rasterization")
    if config.render_size < dataset.width or config.render_size < dataset.height:
        dataset = dataset.resized(config.render_size)
    report = LossReport()

    mesh = TriMesh(mesh.vertices.copy(), mesh.faces.copy())
    for _ in range(config.init_remesh_passes):
        before = mesh.n_vertices
        mesh = remesh(mesh, config.edge_start, config.smoothing).mesh
        if abs(mesh.n_vertices - before) <= 0.01 * before:
            break
    adam = Adam(mesh.vertices.shape, config.betas)

    pool = ThreadPoolExecutor(max_workers=config.threads) if config.threads > 1 else None
    try:
        for it in range(1, config.iterations + 1):
            per_view, grad = evaluate(mesh, dataset, config.sigma(raster, it - 1), config, pool)
            _check(per_view, grad, it)
            lm, ln = per_view.sum(axis=0)
            lt = total_loss(lm, ln, config.mask_weight, config.normal_weight)
            report.record(it, float(lm), float(ln), float(lt), mesh.n_vertices, per_view)
            vertices = adam.step(mesh.vertices, grad, config.learning_rate(it - 1))
            if not np.isfinite(vertices).all():
                raise CarveError(f"non-finite vertices after step {it}", it)
            mesh = mesh.with_vertices(vertices)
            if config.remesh_interval and it % config.remesh_interval == 0 and it < config.iterations:
                res = remesh(mesh, config.target_edge(it), config.smoothing)
                mesh = res.mesh
                adam.remap(res.transfer)
                report.remesh.append({"iter": it, "target_edge": config.target_edge(it), **res.stats})
            if it == 1 or it % 25 == 0:
                log.info("iter %d: mask %.4g normal %.4g total %.4g verts %d", it, lm, ln, lt, mesh.n_vertices)
            if callback is not None:
                callback(it, mesh, report)
        per_view, _ = evaluate(mesh, dataset, config.sigma(raster, config.iterations - 1), config, pool, grads=False)
        _check(per_view, None, config.iterations + 1)
        lm, ln = per_view.sum(axis=0)
        report.final_total = float(total_loss(lm, ln, config.mask_weight, config.normal_weight))
    finally:
        if pool is not None:
            pool.shutdown()
    if not report.decreased:
        log.warning("final loss %.4g exceeds the first %.4g", report.final_total, report.loss_total[0])
    return mesh, report
