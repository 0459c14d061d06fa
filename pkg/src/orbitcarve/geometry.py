"""Core geometric types: triangle meshes, pinhole cameras, oriented clouds.

Conventions used throughout the package:

* Cameras store the world-to-camera transform, ``x_cam = R @ x_world + t``.
  The camera looks down ``+z``; image ``x`` points right and ``y`` points down.
* Triangles wind counter-clockwise when seen from outside (CCW = outward).
* Images are numpy arrays: RGB ``(H, W, 3)`` in ``[0, 1]``, masks ``(H, W)``
  in ``[0, 1]``, normal maps ``(H, W, 3)`` in camera space.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

NEAR_PLANE = 1e-4


class MeshError(ValueError):
    """A mesh violates one of the TriMesh invariants."""


class CameraError(ValueError):
    """A camera violates the pinhole/rigid-pose invariants."""


@dataclass(eq=False)
class TriMesh:
    """Indexed triangle mesh with optional per-vertex RGB colors.

    Single-writer: arrays may be replaced between optimizer steps, never
    mutated while a render is reading them.
    """

    vertices: np.ndarray
    faces: np.ndarray
    colors: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.vertices = np.ascontiguousarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.faces = np.ascontiguousarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if self.colors is not None:
            self.colors = np.ascontiguousarray(self.colors, dtype=np.float64).reshape(-1, 3)
        self.validate()

    def validate(self) -> None:
        n = len(self.vertices)
        if not np.all(np.isfinite(self.vertices)):
            raise MeshError("vertex coordinates must be finite")
        if len(self.faces):
            bad = np.flatnonzero((self.faces < 0).any(axis=1) | (self.faces >= n).any(axis=1))
            if len(bad):
                raise MeshError(
                    f"face {bad[0]} references vertex index out of range "
                    f"({self.faces[bad[0]].tolist()} with {n} vertices)"
                )
            f = self.faces
            rep = np.flatnonzero((f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2]))
            if len(rep):
                raise MeshError(f"face {rep[0]} repeats a vertex: {f[rep[0]].tolist()}")
        if self.colors is not None:
            if len(self.colors) != n:
                raise MeshError(f"{len(self.colors)} colors for {n} vertices")
            if not np.all(np.isfinite(self.colors)) or self.colors.min(initial=0.0) < 0.0 or self.colors.max(initial=0.0) > 1.0:
                raise MeshError("vertex colors must lie in [0, 1]")

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def copy(self) -> TriMesh:
        return TriMesh(
            self.vertices.copy(),
            self.faces.copy(),
            None if self.colors is None else self.colors.copy(),
        )

    def with_vertices(self, vertices: np.ndarray) -> TriMesh:
        return TriMesh(vertices, self.faces, self.colors)

    def with_colors(self, colors: np.ndarray | None) -> TriMesh:
        return TriMesh(self.vertices, self.faces, colors)

    def transformed(self, scale: float = 1.0, offset=(0.0, 0.0, 0.0)) -> TriMesh:
        return TriMesh(self.vertices * scale + np.asarray(offset, dtype=np.float64), self.faces, self.colors)


@dataclass(eq=False)
class Camera:
    """Pinhole camera with world-to-camera rigid pose."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self) -> None:
        self.fx, self.fy, self.cx, self.cy = (float(v) for v in (self.fx, self.fy, self.cx, self.cy))
        self.width, self.height = int(self.width), int(self.height)
        self.rotation = np.array(self.rotation, dtype=np.float64).reshape(3, 3)
        self.translation = np.array(self.translation, dtype=np.float64).reshape(3)
        self.validate()

    def validate(self, tol: float = 1e-6) -> None:
        if not (self.fx > 0 and self.fy > 0):
            raise CameraError(f"focal lengths must be positive (fx={self.fx}, fy={self.fy})")
        if self.width <= 0 or self.height <= 0:
            raise CameraError(f"image size must be positive ({self.width}x{self.height})")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise CameraError(f"principal point ({self.cx}, {self.cy}) outside {self.width}x{self.height}")
        r = self.rotation
        if not (np.all(np.isfinite(r)) and np.all(np.isfinite(self.translation))):
            raise CameraError("pose must be finite")
        if np.abs(r @ r.T - np.eye(3)).max() > tol or abs(np.linalg.det(r) - 1.0) > tol:
            raise CameraError("rotation must be orthonormal with determinant +1")

    @property
    def center(self) -> np.ndarray:
        """Camera position in world coordinates."""
        return -self.rotation.T @ self.translation

    @property
    def intrinsics(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    def to_camera(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) @ self.rotation.T + self.translation

    def project(self, points: np.ndarray, near: float = NEAR_PLANE):
        """Project world points; returns ``(xy, z, valid)``.

        ``z`` is the unclamped camera-space depth; points with ``z <= near``
        are marked invalid rather than raising.
        """
        pc = self.to_camera(np.atleast_2d(points))
        z = pc[:, 2]
        valid = z > near
        zs = np.where(valid, z, 1.0)
        xy = np.stack([self.fx * pc[:, 0] / zs + self.cx, self.fy * pc[:, 1] / zs + self.cy], axis=1)
        return xy, z, valid

    def resized(self, width: int, height: int) -> Camera:
        """Same pose, intrinsics rescaled to a new image size."""
        sx, sy = width / self.width, height / self.height
        return Camera(self.fx * sx, self.fy * sy, self.cx * sx, self.cy * sy, width, height, self.rotation, self.translation)

    def to_dict(self) -> dict:
        return {
            "fx": self.fx,
            "fy": self.fy,
            "cx": self.cx,
            "cy": self.cy,
            "width": self.width,
            "height": self.height,
            "R": [float(v) for v in self.rotation.ravel()],
            "t": [float(v) for v in self.translation],
        }

    @classmethod
    def from_dict(cls, d: dict, width: int | None = None, height: int | None = None) -> Camera:
        try:
            return cls(
                d["fx"],
                d["fy"],
                d["cx"],
                d["cy"],
                d.get("width", width),
                d.get("height", height),
                np.asarray(d["R"], dtype=np.float64).reshape(3, 3),
                np.asarray(d["t"], dtype=np.float64).reshape(3),
            )
        except KeyError as exc:
            raise CameraError(f"camera record missing key {exc.args[0]!r}") from None
        except (TypeError, ValueError) as exc:
            if isinstance(exc, CameraError):
                raise
            raise CameraError(f"malformed camera record: {exc}") from None

    @classmethod
    def look_at(cls, position, target, up, fx, fy, cx, cy, width, height) -> Camera:
        position = np.asarray(position, dtype=np.float64)
        forward = np.asarray(target, dtype=np.float64) - position
        forward /= np.linalg.norm(forward)
        # image y points down, so the camera's y axis is world "down"
        right = np.cross(-np.asarray(up, dtype=np.float64), forward)
        right /= np.linalg.norm(right)
        down = np.cross(forward, right)
        rot = np.stack([right, down, forward])
        return cls(fx, fy, cx, cy, width, height, rot, -rot @ position)


def project(camera: Camera, point, near: float = NEAR_PLANE) -> tuple[float, float, float, bool]:
    """Project one world point to ``(x, y, z, valid)`` pixel coordinates."""
    xy, z, valid = camera.project(np.asarray(point, dtype=np.float64).reshape(1, 3), near)
    return float(xy[0, 0]), float(xy[0, 1]), float(z[0]), bool(valid[0])


@dataclass(eq=False)
class OrientedPointCloud:
    points: np.ndarray
    normals: np.ndarray

    def __post_init__(self) -> None:
        self.points = np.ascontiguousarray(self.points, dtype=np.float64).reshape(-1, 3)
        self.normals = np.ascontiguousarray(self.normals, dtype=np.float64).reshape(-1, 3)
        if len(self.points) != len(self.normals):
            raise ValueError(f"{len(self.points)} points but {len(self.normals)} normals")
        if not (np.all(np.isfinite(self.points)) and np.all(np.isfinite(self.normals))):
            raise ValueError("point cloud must be finite")
        norms = np.linalg.norm(self.normals, axis=1)
        if len(norms) and np.abs(norms - 1.0).max() > 1e-4:
            raise ValueError("point normals must be unit length")

    def __len__(self) -> int:
        return len(self.points)


def check_mask(mask: np.ndarray) -> np.ndarray:
    mask = np.asarray(mask, dtype=np.float64)
    if mask.ndim != 2:
        raise ValueError(f"mask must be 2-D, got shape {mask.shape}")
    if not np.all(np.isfinite(mask)) or mask.min(initial=0) < 0 or mask.max(initial=0) > 1:
        raise ValueError("mask values must be finite and in [0, 1]")
    return mask


def check_rgb(image: np.ndarray) -> np.ndarray:
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f"RGB image must be (H, W, 3), got {image.shape}")
    if not np.all(np.isfinite(image)):
        raise ValueError("RGB image must be finite")
    return image


def check_normal_map(normals: np.ndarray, mask: np.ndarray | None = None, tol: float = 1e-3) -> np.ndarray:
    normals = check_rgb(normals)
    if mask is not None:
        under = np.asarray(mask) > 0
        lengths = np.linalg.norm(normals[under], axis=-1)
        if len(lengths) and np.abs(lengths - 1.0).max() >= tol:
            raise ValueError("normal map must be unit length under the mask")
    return normals


def face_normals(vertices: np.ndarray, faces: np.ndarray, unit: bool = True) -> np.ndarray:
    """Face normals; with ``unit=False`` the length is twice the face area."""
    v = vertices[faces]
    n = np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0])
    if unit:
        length = np.linalg.norm(n, axis=1, keepdims=True)
        n = np.divide(n, length, out=np.zeros_like(n), where=length > 0)
    return n


def scatter_add(index: np.ndarray, values: np.ndarray, n: int) -> np.ndarray:
    """``out[index[i]] += values[i]`` for ``(m, d)`` values, via bincount."""
    index = np.asarray(index).ravel()
    values = np.asarray(values).reshape(len(index), -1)
    return np.stack([np.bincount(index, weights=values[:, j], minlength=n) for j in range(values.shape[1])], axis=1)


def _vertex_normals_raw(mesh: TriMesh) -> tuple[np.ndarray, np.ndarray]:
    cache = mesh.__dict__.get("_normal_cache")
    if cache is not None and cache[0] is mesh.vertices and cache[1] is mesh.faces:
        return cache[2], cache[3]
    fn = face_normals(mesh.vertices, mesh.faces, unit=False)
    raw = scatter_add(mesh.faces, np.repeat(fn, 3, axis=0), mesh.n_vertices)
    length = np.linalg.norm(raw, axis=1)
    out = np.zeros_like(raw)
    ok = length > 0
    out[ok] = raw[ok] / length[ok, None]
    if not ok.all():
        used = np.zeros(len(raw), dtype=bool)
        used[mesh.faces.ravel()] = True
        isolated = int(np.count_nonzero(~used))
        if isolated:
            warnings.warn(f"{isolated} isolated vertices given default normal (0, 0, 1)", stacklevel=3)
        out[~ok] = (0.0, 0.0, 1.0)
    out.flags.writeable = False
    length.flags.writeable = False
    # meshes are never mutated in place, so array identity is a valid key
    mesh._normal_cache = (mesh.vertices, mesh.faces, out, length)
    return out, length


def vertex_normals(mesh: TriMesh) -> np.ndarray:
    """Area-weighted unit vertex normals (read-only, cached per mesh).

    Isolated vertices get ``(0, 0, 1)`` with a warning; degenerate faces
    contribute nothing.
    """
    return _vertex_normals_raw(mesh)[0]


def unique_edges(faces: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Sorted unique undirected edges and the face->edge index map ``(F, 3)``.

    Edge ``k`` of a face joins corners ``k`` and ``k + 1``.
    """
    f = np.asarray(faces, dtype=np.int64)
    e = np.stack([f, np.roll(f, -1, axis=1)], axis=2).reshape(-1, 2)
    e.sort(axis=1)
    edges, inverse = np.unique(e, axis=0, return_inverse=True)
    return edges, inverse.reshape(-1, 3)


def edge_face_counts(faces: np.ndarray) -> np.ndarray:
    _, fe = unique_edges(faces)
    return np.bincount(fe.ravel())


def is_watertight(mesh: TriMesh) -> bool:
    """Every undirected edge is shared by exactly two faces."""
    if mesh.n_faces == 0:
        return False
    return bool(np.all(edge_face_counts(mesh.faces) == 2))


@dataclass(frozen=True)
class MeshStats:
    n_vertices: int
    n_faces: int
    n_edges: int
    euler: int
    area: float
    bbox_min: tuple
    bbox_max: tuple


def mesh_stats(mesh: TriMesh) -> MeshStats:
    edges, _ = unique_edges(mesh.faces) if mesh.n_faces else (np.zeros((0, 2)), None)
    area = 0.5 * float(np.linalg.norm(face_normals(mesh.vertices, mesh.faces, unit=False), axis=1).sum())
    if mesh.n_vertices:
        lo, hi = tuple(mesh.vertices.min(axis=0).tolist()), tuple(mesh.vertices.max(axis=0).tolist())
    else:
        lo = hi = (0.0, 0.0, 0.0)
    return MeshStats(
        mesh.n_vertices,
        mesh.n_faces,
        len(edges),
        mesh.n_vertices - len(edges) + mesh.n_faces,
        area,
        lo,
        hi,
    )


def face_areas(vertices: np.ndarray, faces: np.ndarray) -> np.ndarray:
    return 0.5 * np.linalg.norm(face_normals(vertices, faces, unit=False), axis=1)


@dataclass(frozen=True)
class Normalization:
    """Uniform scale + translation mapping source units into ``[-1, 1]^3``.

    ``normalized = scale * source + offset``.
    """

    scale: float = 1.0
    offset: tuple = (0.0, 0.0, 0.0)

    @classmethod
    def fit(cls, points: np.ndarray, half_extent: float = 1.0) -> Normalization:
        lo, hi = points.min(axis=0), points.max(axis=0)
        center = 0.5 * (lo + hi)
        radius = 0.5 * float((hi - lo).max())
        if radius <= 0:
            raise ValueError("cannot normalize a zero-extent point set")
        scale = half_extent / radius
        return cls(scale, tuple((-scale * center).tolist()))

    def apply(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) * self.scale + np.asarray(self.offset)

    def invert(self, points: np.ndarray) -> np.ndarray:
        return (np.asarray(points, dtype=np.float64) - np.asarray(self.offset)) / self.scale

    def apply_mesh(self, mesh: TriMesh) -> TriMesh:
        return TriMesh(self.apply(mesh.vertices), mesh.faces, mesh.colors)

    def invert_mesh(self, mesh: TriMesh) -> TriMesh:
        return TriMesh(self.invert(mesh.vertices), mesh.faces, mesh.colors)

    def apply_camera(self, camera: Camera) -> Camera:
        # camera-space coordinates scale uniformly, so pixels are unchanged
        t = self.scale * camera.translation - camera.rotation @ np.asarray(self.offset)
        return Camera(camera.fx, camera.fy, camera.cx, camera.cy, camera.width, camera.height, camera.rotation, t)

    def to_dict(self) -> dict:
        return {"scale": self.scale, "offset": list(self.offset)}

    @classmethod
    def from_dict(cls, d: dict) -> Normalization:
        return cls(float(d["scale"]), tuple(float(v) for v in d["offset"]))


def normalize_mesh(mesh: TriMesh, half_extent: float = 1.0) -> tuple[TriMesh, Normalization]:
    norm = Normalization.fit(mesh.vertices, half_extent)
    return norm.apply_mesh(mesh), norm
