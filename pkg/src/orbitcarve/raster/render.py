"""Differentiable mesh renderer: soft silhouette, normal, color, depth.

The soft mask aggregates a sigmoid of the signed screen distance to every
face whose screen box (inflated by ``3 sigma``) contains the pixel:
``M = 1 - prod_f (1 - s'(d_f))``, where ``s'`` is the logistic sigmoid
``s(d / sigma)`` rescaled to hit 0 exactly at ``d = -3 sigma``
(``s' = (s - s(-3)) / (1 - s(-3))``, zero below). The rescale keeps the
mask continuous as faces enter or leave a pixel's window. Hard channels come from a z-buffer with
perspective-correct barycentrics. Gradients of the hard channels flow only
through barycentrics and vertex attributes at covered pixels; coverage
changes at silhouette boundaries carry no gradient (the mask term owns
the silhouette).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import _accel
from ..geometry import NEAR_PLANE, Camera, TriMesh, _vertex_normals_raw, scatter_add, vertex_normals
from . import _numpy


def _kernels(backend: str | None):
    if _accel.resolve(backend) == "numba":
        from . import _numba

        return _numba
    return _numpy


@dataclass(frozen=True)
class RasterConfig:
    sigma: float = 0.5
    near_plane: float = NEAR_PLANE
    mode: str = "soft"

    def __post_init__(self) -> None:
        if self.mode not in ("soft", "hard"):
            raise ValueError(f"mode must be 'soft' or 'hard', got {self.mode!r}")
        if self.mode == "soft" and not self.sigma > 0:
            raise ValueError("sigma must be positive in soft mode")
        if not self.near_plane > 0:
            raise ValueError("near_plane must be positive")


@dataclass(eq=False)
class RenderOutput:
    mask: np.ndarray  # (H, W) coverage in [0, 1]
    normal: np.ndarray  # (H, W, 3) camera space, zero on background
    color: np.ndarray  # (H, W, 3)
    depth: np.ndarray  # (H, W), +inf on background
    face_id: np.ndarray  # (H, W), -1 on background
    bary: np.ndarray  # (H, W, 3) perspective-correct barycentrics
    log_bg: np.ndarray  # (H, W) sum_f log(1 - s'(d_f)) (soft mode only)

    @property
    def covered(self) -> np.ndarray:
        return self.face_id >= 0


@dataclass(eq=False)
class _Prepared:
    vc: np.ndarray
    screen: np.ndarray
    fvalid: np.ndarray
    vn: np.ndarray
    nc: np.ndarray
    colors: np.ndarray


def _prepare(mesh: TriMesh, camera: Camera, config: RasterConfig) -> _Prepared:
    vc = mesh.vertices @ camera.rotation.T + camera.translation
    z = vc[:, 2]
    zs = np.where(z > config.near_plane, z, 1.0)
    screen = np.empty((len(vc), 2))
    screen[:, 0] = camera.fx * vc[:, 0] / zs + camera.cx
    screen[:, 1] = camera.fy * vc[:, 1] / zs + camera.cy
    if mesh.n_faces:
        # faces reaching the near plane are dropped whole
        fvalid = np.all(z[mesh.faces] > config.near_plane, axis=1)
        vn = vertex_normals(mesh) if mesh.n_vertices else np.zeros((0, 3))
    else:
        fvalid = np.zeros(0, dtype=bool)
        vn = np.zeros_like(mesh.vertices)
    nc = vn @ camera.rotation.T
    colors = mesh.colors if mesh.colors is not None else np.zeros_like(mesh.vertices)
    return _Prepared(vc, screen, fvalid, vn, nc, np.ascontiguousarray(colors))


def render(mesh: TriMesh, camera: Camera, config: RasterConfig | None = None, backend: str | None = None) -> RenderOutput:
    config = config or RasterConfig()
    prep = _prepare(mesh, camera, config)
    k = _kernels(backend)
    soft = config.mode == "soft"
    face_id, depth, bary, log_bg = k.forward(
        prep.vc,
        prep.screen,
        mesh.faces,
        prep.fvalid,
        camera.width,
        camera.height,
        camera.fx,
        camera.fy,
        camera.cx,
        camera.cy,
        float(config.sigma),
        soft,
    )
    covered = face_id >= 0
    if soft:
        mask = -np.expm1(log_bg)
    else:
        mask = covered.astype(np.float64)
    fid = np.where(covered, face_id, 0)
    normal = np.zeros((camera.height, camera.width, 3))
    color = np.zeros((camera.height, camera.width, 3))
    if mesh.n_faces and covered.any():
        corners = mesh.faces[fid[covered]]
        b = bary[covered]
        raw = np.einsum("pk,pki->pi", b, prep.nc[corners])
        length = np.linalg.norm(raw, axis=1, keepdims=True)
        normal[covered] = np.divide(raw, length, out=np.zeros_like(raw), where=length > 0)
        color[covered] = np.einsum("pk,pki->pi", b, prep.colors[corners])
    return RenderOutput(mask, normal, color, depth, face_id, bary, log_bg)


def render_backward(
    mesh: TriMesh,
    camera: Camera,
    config: RasterConfig | None,
    grad_mask: np.ndarray | None = None,
    grad_normal: np.ndarray | None = None,
    grad_color: np.ndarray | None = None,
    forward: RenderOutput | None = None,
    backend: str | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Vertex-position and vertex-color gradients of a scalar loss.

    ``grad_*`` are the loss gradients with respect to the rendered mask
    ``(H, W)``, normal map and color image ``(H, W, 3)``; ``None`` means
    zero. Returns ``(dL/dvertices (V, 3), dL/dcolors (V, 3))``.
    """
    g_vert, g_vn, g_col = render_backward_parts(mesh, camera, config, grad_mask, grad_normal, grad_color, forward, backend)
    if g_vn is not None:
        g_vert += vertex_normals_backward(mesh, vertex_normals(mesh), g_vn)
    return g_vert, g_col


def render_backward_parts(
    mesh: TriMesh,
    camera: Camera,
    config: RasterConfig | None,
    grad_mask: np.ndarray | None = None,
    grad_normal: np.ndarray | None = None,
    grad_color: np.ndarray | None = None,
    forward: RenderOutput | None = None,
    backend: str | None = None,
) -> tuple[np.ndarray, np.ndarray | None, np.ndarray]:
    """Like :func:`render_backward`, but stops at the unit vertex normals.

    Returns ``(dL/dvertices excluding the normal path, dL/dnormals (world)
    or None, dL/dcolors)``. The normal pull-back is linear, so callers
    summing many views can apply :func:`vertex_normals_backward` once.
    """
    config = config or RasterConfig()
    shape = (camera.height, camera.width)
    for name, g, want in (("grad_mask", grad_mask, shape), ("grad_normal", grad_normal, shape + (3,)), ("grad_color", grad_color, shape + (3,))):
        if g is not None and np.shape(g) != want:
            raise ValueError(f"{name} has shape {np.shape(g)}, expected {want}")
    n = mesh.n_vertices
    g_vert = np.zeros((n, 3))
    g_col = np.zeros((n, 3))
    g_vn = None
    if mesh.n_faces == 0:
        return g_vert, g_vn, g_col
    if forward is None:
        forward = render(mesh, camera, config, backend)
    prep = _prepare(mesh, camera, config)
    k = _kernels(backend)
    g_vc = np.zeros((n, 3))

    if grad_mask is not None and config.mode == "soft" and np.any(grad_mask):
        gs = k.backward_soft(
            prep.screen, mesh.faces, prep.fvalid, camera.width, camera.height,
            float(config.sigma), forward.mask, np.ascontiguousarray(grad_mask, dtype=np.float64),
        )
        z = prep.vc[:, 2]
        zs = np.where(z > config.near_plane, z, 1.0)
        # x = fx X / Z + cx, y = fy Y / Z + cy
        g_vc[:, 0] += gs[:, 0] * camera.fx / zs
        g_vc[:, 1] += gs[:, 1] * camera.fy / zs
        g_vc[:, 2] -= (gs[:, 0] * (prep.screen[:, 0] - camera.cx) + gs[:, 1] * (prep.screen[:, 1] - camera.cy)) / zs

    use_normal = grad_normal is not None and bool(np.any(grad_normal))
    use_color = grad_color is not None and bool(np.any(grad_color))
    if use_normal or use_color:
        zero3 = np.zeros(shape + (3,))
        gv, g_nc, g_col = k.backward_hard(
            prep.vc, prep.nc, prep.colors, mesh.faces, forward.face_id, forward.bary,
            camera.fx, camera.fy, camera.cx, camera.cy,
            np.ascontiguousarray(grad_normal, dtype=np.float64) if use_normal else zero3,
            np.ascontiguousarray(grad_color, dtype=np.float64) if use_color else zero3,
            use_normal, use_color,
        )
        g_vc += gv
        if use_normal:
            g_vn = g_nc @ camera.rotation
    g_vert += g_vc @ camera.rotation
    return g_vert, g_vn, g_col


def vertex_normals_backward(mesh: TriMesh, normals: np.ndarray, grad_normals: np.ndarray) -> np.ndarray:
    """Pull a gradient on unit vertex normals back to vertex positions."""
    _, length = _vertex_normals_raw(mesh)
    safe = np.where(length > 0, length, 1.0)[:, None]
    g_raw = (grad_normals - normals * np.sum(normals * grad_normals, axis=1, keepdims=True)) / safe
    g_raw[length == 0] = 0.0
    g_face = g_raw[mesh.faces].sum(axis=1)  # (F, 3)
    v = mesh.vertices[mesh.faces]
    e1 = v[:, 1] - v[:, 0]
    e2 = v[:, 2] - v[:, 0]
    # n = e1 x e2: de1 = e2 x g, de2 = g x e1
    g_e1 = np.cross(e2, g_face)
    g_e2 = np.cross(g_face, e1)
    per_corner = np.stack([-(g_e1 + g_e2), g_e1, g_e2], axis=1)
    return scatter_add(mesh.faces, per_corner, mesh.n_vertices)
