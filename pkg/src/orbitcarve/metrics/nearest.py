"""Exact nearest-surface queries: point/triangle distance and a BVH.

Both backends return the same nearest triangle: the closest one, with ties
broken by the lower triangle index.
"""

from __future__ import annotations

import math

import numpy as np

from .. import _accel
from .._accel import njit

LEAF_SIZE = 8


@njit
def closest_point_triangle(px, py, pz, ax, ay, az, bx, by, bz, cx, cy, cz):
    """Closest point on triangle ``abc`` to ``p`` (Voronoi-region walk).

    Returns ``(d2, qx, qy, qz)`` with ``d2`` the squared distance.
    """
    abx, aby, abz = bx - ax, by - ay, bz - az
    acx, acy, acz = cx - ax, cy - ay, cz - az
    apx, apy, apz = px - ax, py - ay, pz - az
    d1 = abx * apx + aby * apy + abz * apz
    d2 = acx * apx + acy * apy + acz * apz
    if d1 <= 0.0 and d2 <= 0.0:
        qx, qy, qz = ax, ay, az
    else:
        bpx, bpy, bpz = px - bx, py - by, pz - bz
        d3 = abx * bpx + aby * bpy + abz * bpz
        d4 = acx * bpx + acy * bpy + acz * bpz
        vc = d1 * d4 - d3 * d2
        if d3 >= 0.0 and d4 <= d3:
            qx, qy, qz = bx, by, bz
        elif vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
            v = d1 / (d1 - d3)
            qx, qy, qz = ax + v * abx, ay + v * aby, az + v * abz
        else:
            cpx, cpy, cpz = px - cx, py - cy, pz - cz
            d5 = abx * cpx + aby * cpy + abz * cpz
            d6 = acx * cpx + acy * cpy + acz * cpz
            vb = d5 * d2 - d1 * d6
            va = d3 * d6 - d5 * d4
            if d6 >= 0.0 and d5 <= d6:
                qx, qy, qz = cx, cy, cz
            elif vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
                w = d2 / (d2 - d6)
                qx, qy, qz = ax + w * acx, ay + w * acy, az + w * acz
            elif va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
                w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
                qx, qy, qz = bx + w * (cx - bx), by + w * (cy - by), bz + w * (cz - bz)
            else:
                denom = va + vb + vc
                if denom == 0.0:
                    # degenerate triangle: fall back to its vertices
                    qx, qy, qz = ax, ay, az
                else:
                    inv = 1.0 / denom
                    v = vb * inv
                    w = vc * inv
                    qx = ax + abx * v + acx * w
                    qy = ay + aby * v + acy * w
                    qz = az + abz * v + acz * w
    dx, dy, dz = px - qx, py - qy, pz - qz
    return dx * dx + dy * dy + dz * dz, qx, qy, qz


def point_triangle_distance(p, a, b, c) -> float:
    """Euclidean distance from point ``p`` to triangle ``abc``."""
    d2, _, _, _ = closest_point_triangle(*map(float, p), *map(float, a), *map(float, b), *map(float, c))
    return math.sqrt(d2)


class BVH:
    """Axis-aligned bounding-volume hierarchy over a triangle soup.

    Built once (median split on the longest centroid axis) and read-only
    afterwards, so queries may run concurrently.
    """

    def __init__(self, vertices: np.ndarray, faces: np.ndarray, leaf_size: int = LEAF_SIZE):
        self.vertices = np.ascontiguousarray(vertices, dtype=np.float64)
        self.faces = np.ascontiguousarray(faces, dtype=np.int64)
        if len(self.faces) == 0:
            raise ValueError("cannot build a BVH over zero triangles")
        tri = self.vertices[self.faces]
        lo_t, hi_t = tri.min(axis=1), tri.max(axis=1)
        cen = tri.mean(axis=1)
        order = np.arange(len(self.faces))
        lo, hi, child, start, count = [], [], [], [], []
        stack = [(0, len(order), -1, 0)]
        while stack:
            s, e, parent, side = stack.pop()
            node = len(lo)
            if parent >= 0:
                child[parent][side] = node
            idx = order[s:e]
            lo.append(lo_t[idx].min(axis=0))
            hi.append(hi_t[idx].max(axis=0))
            child.append([-1, -1])
            if e - s <= leaf_size:
                start.append(s)
                count.append(e - s)
                continue
            start.append(s)
            count.append(0)
            c = cen[idx]
            axis = int(np.argmax(c.max(axis=0) - c.min(axis=0)))
            srt = idx[np.argsort(c[:, axis], kind="stable")]
            order[s:e] = srt
            mid = (s + e) // 2
            stack.append((mid, e, node, 1))
            stack.append((s, mid, node, 0))
        self.order = order
        self.lo = np.array(lo)
        self.hi = np.array(hi)
        self.child = np.array(child, dtype=np.int64)
        self.start = np.array(start, dtype=np.int64)
        self.count = np.array(count, dtype=np.int64)

    def query(self, points: np.ndarray, backend: str | None = None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Nearest triangle for each point: ``(distance, face index, closest point)``."""
        points = np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 3)
        if _accel.resolve(backend) == "numba":
            d2, fid, q = _bvh_query(points, self.vertices, self.faces, self.order, self.lo, self.hi, self.child, self.start, self.count)
        else:
            d2, fid, q = brute_force(points, self.vertices, self.faces)
        return np.sqrt(d2), fid, q


@njit
def _box_d2(px, py, pz, lo, hi, node):
    d = 0.0
    for k, p in enumerate((px, py, pz)):
        if p < lo[node, k]:
            t = lo[node, k] - p
            d += t * t
        elif p > hi[node, k]:
            t = p - hi[node, k]
            d += t * t
    return d


@njit
def _bvh_query(points, vertices, faces, order, lo, hi, child, start, count):
    n = points.shape[0]
    out_d2 = np.empty(n)
    out_f = np.empty(n, dtype=np.int64)
    out_q = np.empty((n, 3))
    stack = np.empty(128, dtype=np.int64)
    for i in range(n):
        px, py, pz = points[i, 0], points[i, 1], points[i, 2]
        best = np.inf
        best_f = -1
        bq0 = bq1 = bq2 = 0.0
        top = 0
        stack[top] = 0
        top += 1
        while top > 0:
            top -= 1
            node = stack[top]
            # keep equal-distance boxes: they may hold a lower-index tie
            if _box_d2(px, py, pz, lo, hi, node) > best:
                continue
            if count[node] > 0:
                for j in range(start[node], start[node] + count[node]):
                    f = order[j]
                    a = faces[f, 0]
                    b = faces[f, 1]
                    c = faces[f, 2]
                    d2, qx, qy, qz = closest_point_triangle(
                        px, py, pz,
                        vertices[a, 0], vertices[a, 1], vertices[a, 2],
                        vertices[b, 0], vertices[b, 1], vertices[b, 2],
                        vertices[c, 0], vertices[c, 1], vertices[c, 2],
                    )
                    if d2 < best or (d2 == best and f < best_f):
                        best = d2
                        best_f = f
                        bq0, bq1, bq2 = qx, qy, qz
            else:
                l = child[node, 0]
                r = child[node, 1]
                dl = _box_d2(px, py, pz, lo, hi, l)
                dr = _box_d2(px, py, pz, lo, hi, r)
                # push the farther child first so the nearer one is visited first
                if dl <= dr:
                    stack[top] = r
                    stack[top + 1] = l
                else:
                    stack[top] = l
                    stack[top + 1] = r
                top += 2
        out_d2[i] = best
        out_f[i] = best_f
        out_q[i, 0] = bq0
        out_q[i, 1] = bq1
        out_q[i, 2] = bq2
    return out_d2, out_f, out_q


def closest_points_numpy(p: np.ndarray, a: np.ndarray, b: np.ndarray, c: np.ndarray):
    """Vectorized :func:`closest_point_triangle` over broadcast arrays ``(..., 3)``.

    Mirrors the scalar region walk operation by operation, so both give the
    same floating-point result.
    """
    ab, ac, ap = b - a, c - a, p - a
    dot = lambda u, v: u[..., 0] * v[..., 0] + u[..., 1] * v[..., 1] + u[..., 2] * v[..., 2]
    d1, d2 = dot(ab, ap), dot(ac, ap)
    bp = p - b
    d3, d4 = dot(ab, bp), dot(ac, bp)
    cp = p - c
    d5, d6 = dot(ab, cp), dot(ac, cp)
    vc = d1 * d4 - d3 * d2
    vb = d5 * d2 - d1 * d6
    va = d3 * d6 - d5 * d4
    with np.errstate(divide="ignore", invalid="ignore"):
        v_ab = d1 / (d1 - d3)
        w_ac = d2 / (d2 - d6)
        w_bc = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        denom = va + vb + vc
        inv = 1.0 / denom
        v_in = vb * inv
        w_in = vc * inv
    shape = np.broadcast_shapes(p.shape, a.shape)
    q = np.empty(shape)
    done = np.zeros(shape[:-1], dtype=bool)

    def put(cond, value):
        sel = cond & ~done
        q[sel] = np.broadcast_to(value, shape)[sel]
        done[...] = done | sel

    put((d1 <= 0.0) & (d2 <= 0.0), a)
    put((d3 >= 0.0) & (d4 <= d3), b)
    put((vc <= 0.0) & (d1 >= 0.0) & (d3 <= 0.0), a + v_ab[..., None] * ab)
    put((d6 >= 0.0) & (d5 <= d6), c)
    put((vb <= 0.0) & (d2 >= 0.0) & (d6 <= 0.0), a + w_ac[..., None] * ac)
    put((va <= 0.0) & ((d4 - d3) >= 0.0) & ((d5 - d6) >= 0.0), b + w_bc[..., None] * (c - b))
    put(denom == 0.0, a)
    inner = a + ab * v_in[..., None] + ac * w_in[..., None]
    put(np.ones(shape[:-1], dtype=bool), inner)
    diff = p - q
    return dot(diff, diff), q


def brute_force(points: np.ndarray, vertices: np.ndarray, faces: np.ndarray, chunk: int = 1 << 21):
    """All-pairs nearest triangle, chunked over points. Returns ``(d2, face, point)``."""
    a, b, c = (vertices[faces[:, k]] for k in range(3))
    n = len(points)
    out_d2 = np.empty(n)
    out_f = np.empty(n, dtype=np.int64)
    out_q = np.empty((n, 3))
    step = max(1, chunk // max(1, len(faces)))
    for s in range(0, n, step):
        p = points[s : s + step, None, :]
        d2, q = closest_points_numpy(p, a[None], b[None], c[None])
        f = np.argmin(d2, axis=1)  # first minimum: lowest index on ties
        rows = np.arange(len(f))
        out_d2[s : s + step] = d2[rows, f]
        out_f[s : s + step] = f
        out_q[s : s + step] = q[rows, f]
    return out_d2, out_f, out_q
