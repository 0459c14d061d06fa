"""Procedural oracle shapes: icosphere, cube, capsule, torus."""

from __future__ import annotations

import numpy as np

from .geometry import TriMesh

MAX_SUBDIVISION = 7

# cube face colors, indexed by (axis, positive side)
_FACE_COLORS = {
    (0, True): (0.9, 0.2, 0.2),
    (0, False): (0.2, 0.9, 0.9),
    (1, True): (0.2, 0.9, 0.2),
    (1, False): (0.9, 0.2, 0.9),
    (2, True): (0.2, 0.2, 0.9),
    (2, False): (0.9, 0.9, 0.2),
}

HEMISPHERE_COLORS = ((0.85, 0.25, 0.15), (0.15, 0.35, 0.85))


def icosahedron() -> TriMesh:
    t = (1.0 + 5.0**0.5) / 2.0
    v = np.array(
        [
            [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
            [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
            [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
        ],
        dtype=np.float64,
    )
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    f = np.array(
        [
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ],
        dtype=np.int64,
    )
    return TriMesh(v, f)


def subdivide(vertices: np.ndarray, faces: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """One 1-to-4 midpoint subdivision with shared edge midpoints."""
    e = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    e.sort(axis=1)
    edges, inv = np.unique(e, axis=0, return_inverse=True)
    mids = 0.5 * (vertices[edges[:, 0]] + vertices[edges[:, 1]])
    m = inv.reshape(3, -1).T + len(vertices)  # midpoint ids for edges 01, 12, 20
    a, b, c = faces[:, 0], faces[:, 1], faces[:, 2]
    m01, m12, m20 = m[:, 0], m[:, 1], m[:, 2]
    new_faces = np.concatenate(
        [
            np.stack([a, m01, m20], axis=1),
            np.stack([m01, b, m12], axis=1),
            np.stack([m20, m12, c], axis=1),
            np.stack([m01, m12, m20], axis=1),
        ]
    )
    return np.concatenate([vertices, mids]), new_faces


def icosphere(level: int = 3, radius: float = 1.0) -> TriMesh:
    """Subdivided icosahedron with ``10 * 4**level + 2`` vertices."""
    if not 0 <= level <= MAX_SUBDIVISION:
        raise ValueError(f"subdivision level must be in [0, {MAX_SUBDIVISION}]")
    base = icosahedron()
    v, f = base.vertices, base.faces
    for _ in range(level):
        v, f = subdivide(v, f)
        v = v / np.linalg.norm(v, axis=1, keepdims=True)
    return TriMesh(v * radius, _outward_convex(v, f))


def hemisphere_colors(vertices: np.ndarray) -> np.ndarray:
    """Two-tone coloring split by the sign of x."""
    pos, neg = (np.asarray(c) for c in HEMISPHERE_COLORS)
    return np.where((vertices[:, 0] >= 0.0)[:, None], pos, neg)


def cube(level: int = 0, size: float = 1.0) -> TriMesh:
    """Axis-aligned cube of edge ``size`` centered at the origin.

    Each face is an ``(n+1) x (n+1)`` vertex grid with ``n = 2**level``;
    level 0 gives the 8-vertex, 12-triangle cube.
    """
    if not 0 <= level <= MAX_SUBDIVISION:
        raise ValueError(f"subdivision level must be in [0, {MAX_SUBDIVISION}]")
    n = 2**level
    verts, faces = [], []
    s = np.linspace(-0.5, 0.5, n + 1)
    for axis in range(3):
        for positive in (True, False):
            u_axis, v_axis = [a for a in range(3) if a != axis]
            base = sum(len(x) for x in verts)
            grid = np.zeros((n + 1, n + 1, 3))
            uu, vv = np.meshgrid(s, s, indexing="ij")
            grid[..., u_axis] = uu
            grid[..., v_axis] = vv
            grid[..., axis] = 0.5 if positive else -0.5
            verts.append(grid.reshape(-1, 3))
            idx = np.arange((n + 1) ** 2).reshape(n + 1, n + 1) + base
            a, b = idx[:-1, :-1].ravel(), idx[1:, :-1].ravel()
            c, d = idx[1:, 1:].ravel(), idx[:-1, 1:].ravel()
            faces.append(np.stack([a, b, c], axis=1))
            faces.append(np.stack([a, c, d], axis=1))
    v = np.concatenate(verts)
    f = np.concatenate(faces)
    # weld shared edge/corner vertices
    key = np.round(v * 2 * n).astype(np.int64)
    _, first, inv = np.unique(key, axis=0, return_index=True, return_inverse=True)
    order = np.argsort(first)
    remap = np.empty(len(order), dtype=np.int64)
    remap[order] = np.arange(len(order))
    v = v[first[order]]
    f = remap[inv.ravel()[f]]
    colors = np.zeros_like(v)
    count = np.zeros(len(v))
    for (axis, positive), col in _FACE_COLORS.items():
        on = np.isclose(v[:, axis], 0.5 if positive else -0.5)
        colors[on] += col
        count[on] += 1
    colors /= count[:, None]
    return TriMesh(v * size, _outward_convex(v, f), colors)


def torus(level: int = 3, major: float = 0.7, minor: float = 0.3) -> TriMesh:
    """Torus around the y axis with ``8 * 2**level`` x ``4 * 2**level`` quads."""
    if not 0 <= level <= MAX_SUBDIVISION:
        raise ValueError(f"subdivision level must be in [0, {MAX_SUBDIVISION}]")
    nu, nv = 8 * 2**level, 4 * 2**level
    u = 2 * np.pi * np.arange(nu) / nu
    v = 2 * np.pi * np.arange(nv) / nv
    uu, vv = np.meshgrid(u, v, indexing="ij")
    ring = major + minor * np.cos(vv)
    pts = np.stack([ring * np.cos(uu), minor * np.sin(vv), ring * np.sin(uu)], axis=-1).reshape(-1, 3)
    i, j = np.meshgrid(np.arange(nu), np.arange(nv), indexing="ij")
    a = (i * nv + j).ravel()
    b = (((i + 1) % nu) * nv + j).ravel()
    c = (((i + 1) % nu) * nv + (j + 1) % nv).ravel()
    d = (i * nv + (j + 1) % nv).ravel()
    f = np.concatenate([np.stack([a, c, b], axis=1), np.stack([a, d, c], axis=1)])
    colors = 0.5 + 0.4 * np.stack([np.cos(uu), np.sin(vv), np.sin(uu)], axis=-1).reshape(-1, 3)
    return _oriented(TriMesh(pts, f, colors))


def capsule(level: int = 3, radius: float = 0.5, half_length: float = 0.5) -> TriMesh:
    """Icosphere stretched along y: hemispherical caps joined by a cylinder."""
    sphere = icosphere(level, radius)
    v = sphere.vertices.copy()
    v[:, 1] += np.sign(v[:, 1]) * half_length
    # equator vertices (y == 0) stay on the cylinder's mid-ring
    colors = np.where((v[:, 1] >= 0)[:, None], HEMISPHERE_COLORS[0], HEMISPHERE_COLORS[1])
    return TriMesh(v, sphere.faces, colors)


def _outward_convex(vertices: np.ndarray, faces: np.ndarray) -> np.ndarray:
    """Wind each face of an origin-centered convex shape outward."""
    tri = vertices[faces]
    n = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    flip = np.einsum("fi,fi->f", n, tri.mean(axis=1)) < 0
    faces = faces.copy()
    faces[flip] = faces[flip][:, ::-1]
    return faces


def _oriented(mesh: TriMesh) -> TriMesh:
    """Flip all faces if the signed volume is negative."""
    v = mesh.vertices[mesh.faces]
    vol = np.einsum("fi,fi->f", v[:, 0], np.cross(v[:, 1], v[:, 2])).sum()
    if vol < 0:
        return TriMesh(mesh.vertices, mesh.faces[:, ::-1], mesh.colors)
    return mesh


def make_primitive(kind: str, subdivision: int = 3) -> TriMesh:
    """Watertight outward-oriented primitive with procedural vertex colors.

    Sizes: sphere radius 1; cube edge 1 (area 6); capsule and torus fit in
    ``[-1, 1]^3``.
    """
    if kind == "sphere":
        m = icosphere(subdivision)
        return TriMesh(m.vertices, m.faces, hemisphere_colors(m.vertices))
    if kind == "cube":
        return cube(subdivision)
    if kind == "capsule":
        return capsule(subdivision)
    if kind == "torus":
        return torus(subdivision)
    raise ValueError(f"unknown primitive {kind!r} (sphere, cube, capsule, torus)")
