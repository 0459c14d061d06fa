"""Marching cubes with a generated 256-case table.

The table is derived from the cube faces rather than typed in: on every
face the iso-segments are directed from the outside-to-inside crossing to
the next inside-to-outside crossing (walking the face counter-clockwise as
seen from outside the cube), the segments are chained into loops and the
loops fan-triangulated. Ambiguous faces (diagonal corners inside) always
separate the inside corners. The decision depends only on the face's four
corners, so neighbouring cubes agree and the result is watertight.
Triangles wind so their normals point from inside (``> iso``) to outside.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from ..geometry import TriMesh
from .grid import ScalarGrid

CORNERS = np.array(
    [[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0], [0, 0, 1], [1, 0, 1], [1, 1, 1], [0, 1, 1]],
    dtype=np.int64,
)
EDGES = np.array(
    [[0, 1], [1, 2], [2, 3], [3, 0], [4, 5], [5, 6], [6, 7], [7, 4], [0, 4], [1, 5], [2, 6], [3, 7]],
    dtype=np.int64,
)
# corner cycles, counter-clockwise seen from outside the cube
FACES = ((0, 3, 2, 1), (4, 5, 6, 7), (0, 1, 5, 4), (3, 7, 6, 2), (0, 4, 7, 3), (1, 2, 6, 5))

_EDGE_OF = {}
for _e, (_a, _b) in enumerate(EDGES):
    _EDGE_OF[(int(_a), int(_b))] = _e
    _EDGE_OF[(int(_b), int(_a))] = _e


class EmptyMeshError(ValueError):
    """The requested iso-level does not intersect the grid."""


def _case_loops(case: int) -> list[list[int]]:
    inside = [(case >> c) & 1 == 1 for c in range(8)]
    nxt: dict[int, int] = {}
    for face in FACES:
        crossings = []
        for k in range(4):
            a, b = face[k], face[(k + 1) % 4]
            if inside[a] != inside[b]:
                crossings.append((_EDGE_OF[(a, b)], inside[a]))  # (edge, leaving inside)
        for i, (edge, leaving) in enumerate(crossings):
            if leaving:
                continue
            # pair an entering crossing with the next leaving one
            for j in range(1, len(crossings)):
                e2, leaving2 = crossings[(i + j) % len(crossings)]
                if leaving2:
                    nxt[edge] = e2
                    break
    loops = []
    seen = set()
    for start in sorted(nxt):
        if start in seen:
            continue
        loop = [start]
        seen.add(start)
        cur = nxt[start]
        while cur != start:
            loop.append(cur)
            seen.add(cur)
            cur = nxt[cur]
        loops.append(loop)
    return loops


def _on_one_face(edges) -> bool:
    corners = set()
    for e in edges:
        corners.update(int(c) for c in EDGES[e])
    return any(corners <= set(face) for face in FACES)


def _fan(loop: list[int]) -> list[tuple[int, int, int]]:
    """Fan-triangulate a loop, avoiding triangles that lie in a cube face.

    A triangle flat on a shared face would be emitted by both neighbouring
    cubes, so the fan apex is rotated until none is.
    """
    n = len(loop)
    for r in range(n):
        ring = loop[r:] + loop[:r]
        tris = [(ring[0], ring[i], ring[i + 1]) for i in range(1, n - 1)]
        if not any(_on_one_face(t) for t in tris):
            return tris
    raise AssertionError(f"no valid fan for loop {loop}")


@lru_cache(maxsize=1)
def triangle_table() -> np.ndarray:
    """``(256, T, 3)`` local edge ids per case, padded with -1."""
    per_case = []
    for case in range(256):
        tris = []
        for loop in _case_loops(case):
            tris.extend(_fan(loop))
        per_case.append(tris)
    width = max(len(t) for t in per_case)
    table = np.full((256, width, 3), -1, dtype=np.int64)
    for case, tris in enumerate(per_case):
        if tris:
            table[case, : len(tris)] = tris
    return table


def marching_cubes(grid: ScalarGrid, iso: float = 0.0) -> TriMesh:
    values = grid.values
    nx, ny, nz = values.shape
    if min(values.shape) < 2:
        raise EmptyMeshError("grid too small for marching cubes")
    inside = values > iso
    case = np.zeros((nx - 1, ny - 1, nz - 1), dtype=np.int64)
    for c, (dx, dy, dz) in enumerate(CORNERS):
        case |= inside[dx : nx - 1 + dx, dy : ny - 1 + dy, dz : nz - 1 + dz].astype(np.int64) << c
    active = np.flatnonzero((case != 0) & (case != 255))
    if len(active) == 0:
        raise EmptyMeshError(f"iso-level {iso} does not cross the grid")
    table = triangle_table()
    cases = case.ravel()[active]
    ci, cj, ck = np.unravel_index(active, case.shape)
    tris = table[cases]  # (A, T, 3)
    valid = tris[:, :, 0] >= 0
    cube_of_tri = np.repeat(np.arange(len(active)), valid.sum(axis=1))
    local = tris[valid]  # (M, 3) local edge ids

    # global key of each local edge: (start node, axis)
    axis = np.argmax(CORNERS[EDGES[:, 1]] - CORNERS[EDGES[:, 0]] != 0, axis=1)
    lo_corner = np.minimum(CORNERS[EDGES[:, 0]], CORNERS[EDGES[:, 1]])
    gi = ci[cube_of_tri][:, None] + lo_corner[local, 0]
    gj = cj[cube_of_tri][:, None] + lo_corner[local, 1]
    gk = ck[cube_of_tri][:, None] + lo_corner[local, 2]
    keys = ((gi * ny + gj) * nz + gk) * 3 + axis[local]
    uniq, inv = np.unique(keys.ravel(), return_inverse=True)
    faces = inv.reshape(-1, 3)

    node, ax = np.divmod(uniq, 3)
    i0, rem = np.divmod(node, ny * nz)
    j0, k0 = np.divmod(rem, nz)
    step = np.eye(3, dtype=np.int64)[ax]
    i1, j1, k1 = i0 + step[:, 0], j0 + step[:, 1], k0 + step[:, 2]
    va = values[i0, j0, k0]
    vb = values[i1, j1, k1]
    t = (iso - va) / (vb - va)
    pos = np.stack([i0, j0, k0], axis=1) + t[:, None] * step
    vertices = grid.origin + grid.spacing * pos
    return TriMesh(vertices, faces)
