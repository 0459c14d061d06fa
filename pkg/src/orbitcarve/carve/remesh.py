"""Isotropic remeshing step: split, collapse, flip, tangential smoothing.

Every step reports how new vertices derive from old ones as a sparse
row-stochastic ``transfer`` matrix (new x old), which the optimizer uses
to carry its moment estimates across topology changes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ..geometry import TriMesh, face_normals, unique_edges, vertex_normals

log = logging.getLogger(__name__)

SPLIT_RATIO = 4.0 / 3.0
COLLAPSE_RATIO = 4.0 / 5.0
MIN_AREA2 = 2e-12  # twice the smallest face area we allow to be created


@dataclass
class RemeshResult:
    mesh: TriMesh
    transfer: sp.csr_matrix
    stats: dict = field(default_factory=dict)

    def correspondence(self) -> list[np.ndarray]:
        """For each old vertex, the new vertices that draw on it."""
        t = self.transfer.tocsc()
        return [t.indices[t.indptr[i] : t.indptr[i + 1]] for i in range(t.shape[1])]


def remap(values: np.ndarray, transfer: sp.csr_matrix) -> np.ndarray:
    """Carry per-vertex values through a remesh (averaging merged sources)."""
    return np.asarray(transfer @ values)


def _identity(n: int) -> sp.csr_matrix:
    return sp.identity(n, format="csr", dtype=np.float64)


def _edge_faces(faces: np.ndarray):
    """Unique edges, face->edge map, and up to two faces per edge."""
    edges, fe = unique_edges(faces)
    count = np.bincount(fe.ravel(), minlength=len(edges))
    order = np.argsort(fe.ravel(), kind="stable")
    starts = np.concatenate([[0], np.cumsum(count)])
    ef = np.full((len(edges), 2), -1, dtype=np.int64)
    first = order[starts[:-1]] // 3
    ef[:, 0] = first
    two = count >= 2
    ef[two, 1] = order[starts[:-1][two] + 1] // 3
    return edges, fe, count, ef


def split_long_edges(vertices: np.ndarray, faces: np.ndarray, max_len: float):
    """Split every edge longer than ``max_len`` at its midpoint (red-green)."""
    n = len(vertices)
    if len(faces) == 0:
        return vertices, faces, _identity(n), 0
    edges, fe, count, _ = _edge_faces(faces)
    length = np.linalg.norm(vertices[edges[:, 0]] - vertices[edges[:, 1]], axis=1)
    split = (length > max_len) & (count <= 2)
    n_split = int(split.sum())
    if n_split == 0:
        return vertices, faces, _identity(n), 0
    mid_id = np.full(len(edges), -1, dtype=np.int64)
    mid_id[split] = n + np.arange(n_split)
    se = edges[split]
    new_vertices = np.concatenate([vertices, 0.5 * (vertices[se[:, 0]] + vertices[se[:, 1]])])

    fs = split[fe]  # (F, 3) edge k joins corners k, k+1
    ns = fs.sum(axis=1)
    # rotate each face so its pattern is canonical
    rot = np.zeros(len(faces), dtype=np.int64)
    one = ns == 1
    rot[one] = np.argmax(fs[one], axis=1)
    two = ns == 2
    rot[two] = (np.argmin(fs[two], axis=1) + 1) % 3
    idx = (np.arange(3)[None, :] + rot[:, None]) % 3
    rf = np.take_along_axis(faces, idx, axis=1)
    rm = np.take_along_axis(mid_id[fe], idx, axis=1)
    a, b, c = rf[:, 0], rf[:, 1], rf[:, 2]
    m0, m1, m2 = rm[:, 0], rm[:, 1], rm[:, 2]

    out = [faces[ns == 0]]
    s = one
    out += [np.stack([a[s], m0[s], c[s]], 1), np.stack([m0[s], b[s], c[s]], 1)]
    s = two
    out.append(np.stack([m0[s], b[s], m1[s]], 1))
    # quad (a, m0, m1, c): cut along the shorter diagonal
    d_a = np.linalg.norm(new_vertices[a[s]] - new_vertices[m1[s]], axis=1)
    d_m = np.linalg.norm(new_vertices[m0[s]] - new_vertices[c[s]], axis=1)
    use_a = d_a <= d_m
    sa = np.flatnonzero(s)[use_a]
    sm = np.flatnonzero(s)[~use_a]
    out += [np.stack([a[sa], m0[sa], m1[sa]], 1), np.stack([a[sa], m1[sa], c[sa]], 1)]
    out += [np.stack([a[sm], m0[sm], c[sm]], 1), np.stack([m0[sm], m1[sm], c[sm]], 1)]
    s = ns == 3
    out += [
        np.stack([a[s], m0[s], m2[s]], 1),
        np.stack([m0[s], b[s], m1[s]], 1),
        np.stack([m2[s], m1[s], c[s]], 1),
        np.stack([m0[s], m1[s], m2[s]], 1),
    ]
    new_faces = np.concatenate(out)

    rows = np.concatenate([np.arange(n), np.repeat(n + np.arange(n_split), 2)])
    cols = np.concatenate([np.arange(n), se.ravel()])
    vals = np.concatenate([np.ones(n), np.full(2 * n_split, 0.5)])
    transfer = sp.csr_matrix((vals, (rows, cols)), shape=(n + n_split, n))
    return new_vertices, new_faces, transfer, n_split


def _csr_adjacency(n: int, faces: np.ndarray):
    """Vertex->faces and vertex->neighbors as CSR (indptr, indices) pairs."""
    flat = faces.ravel()
    order = np.argsort(flat, kind="stable")
    vf_ptr = np.concatenate([[0], np.cumsum(np.bincount(flat, minlength=n))])
    vf = order // 3
    e = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    e = np.concatenate([e, e[:, ::-1]])
    e = np.unique(e, axis=0)
    nb_ptr = np.concatenate([[0], np.cumsum(np.bincount(e[:, 0], minlength=n))])
    return vf_ptr, vf, nb_ptr, e[:, 1]


def collapse_short_edges(vertices: np.ndarray, faces: np.ndarray, min_len: float):
    """Collapse short edges to their midpoints, guarded for manifoldness.

    A collapse of ``(u, v)`` is accepted only if the two vertices share
    exactly the two opposite vertices (link condition), no vertex drops
    below valence 3, and no surviving incident face turns by more than 90
    degrees or degenerates. Accepted collapses have disjoint one-rings, so
    they are applied together.
    """
    n = len(vertices)
    if len(faces) == 0:
        return vertices, faces, _identity(n), 0, 0
    edges, fe, count, ef = _edge_faces(faces)
    length = np.linalg.norm(vertices[edges[:, 0]] - vertices[edges[:, 1]], axis=1)
    cand = np.flatnonzero(length < min_len)
    nonmanifold = int(np.count_nonzero(count[cand] != 2))
    cand = cand[count[cand] == 2]
    if len(cand) == 0:
        return vertices, faces, _identity(n), 0, nonmanifold
    cand = cand[np.argsort(length[cand], kind="stable")]
    vf_ptr, vf, nb_ptr, nb = _csr_adjacency(n, faces)
    valence = np.diff(nb_ptr)
    boundary = np.zeros(n, dtype=bool)
    boundary[edges[count == 1].ravel()] = True
    fnormal = face_normals(vertices, faces, unit=False)

    locked = np.zeros(n, dtype=bool)
    target = np.arange(n)
    new_pos = vertices.copy()
    n_collapsed = 0
    for e in cand:
        u, v = int(edges[e, 0]), int(edges[e, 1])
        if locked[u] or locked[v] or boundary[u] or boundary[v]:
            continue
        f0, f1 = ef[e]
        opp = set(faces[f0].tolist() + faces[f1].tolist()) - {u, v}
        if len(opp) != 2:
            continue
        nu = nb[nb_ptr[u] : nb_ptr[u + 1]]
        nv = nb[nb_ptr[v] : nb_ptr[v + 1]]
        if set(nu.tolist()) & set(nv.tolist()) != opp:
            continue
        if any(valence[o] <= 3 for o in opp) or valence[u] + valence[v] - 4 < 3:
            continue
        p = 0.5 * (vertices[u] + vertices[v])
        inc = np.unique(np.concatenate([vf[vf_ptr[u] : vf_ptr[u + 1]], vf[vf_ptr[v] : vf_ptr[v + 1]]]))
        inc = inc[(inc != f0) & (inc != f1)]
        tri = vertices[faces[inc]]
        moved = (faces[inc] == u) | (faces[inc] == v)
        tri[moved] = p
        nn = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        if np.any(np.linalg.norm(nn, axis=1) < MIN_AREA2):
            continue
        if np.any(np.einsum("ij,ij->i", nn, fnormal[inc]) <= 0.0):
            continue
        target[v] = u
        new_pos[u] = p
        locked[u] = locked[v] = True
        locked[nu] = True
        locked[nv] = True
        n_collapsed += 1

    if n_collapsed == 0:
        return vertices, faces, _identity(n), 0, nonmanifold
    f = target[faces]
    keep = (f[:, 0] != f[:, 1]) & (f[:, 1] != f[:, 2]) & (f[:, 0] != f[:, 2])
    f = f[keep]
    alive = target == np.arange(n)
    new_index = np.cumsum(alive) - 1
    new_faces = new_index[f]
    new_vertices = new_pos[alive]
    rows = new_index[target]
    merged = np.bincount(target, minlength=n)
    vals = 1.0 / merged[target]
    transfer = sp.csr_matrix((vals, (rows, np.arange(n))), shape=(int(alive.sum()), n))
    return new_vertices, new_faces, transfer, n_collapsed, nonmanifold


def flip_edges(vertices: np.ndarray, faces: np.ndarray, max_rounds: int = 2):
    """Flip interior edges toward valence 6.

    An edge flips when both opposite vertices gain a neighbour while below
    valence 6 and the summed deviation of the four vertices drops.
    """
    faces = faces.copy()
    n = len(vertices)
    total = 0
    for _ in range(max_rounds):
        if len(faces) == 0:
            break
        edges, fe, count, ef = _edge_faces(faces)
        interior = np.flatnonzero(count == 2)
        if len(interior) == 0:
            break
        valence = np.bincount(edges.ravel(), minlength=n)
        e_int = edges[interior]
        f0, f1 = ef[interior, 0], ef[interior, 1]
        # opposite corner: the one not on the edge
        def opposite(fi):
            fv = faces[fi]
            mask = (fv != e_int[:, [0]]) & (fv != e_int[:, [1]])
            return fv[np.arange(len(fi)), np.argmax(mask, axis=1)]

        a = opposite(f0)
        b = opposite(f1)
        u, v = e_int[:, 0], e_int[:, 1]
        dev = lambda x: np.abs(x - 6)
        before = dev(valence[u]) + dev(valence[v]) + dev(valence[a]) + dev(valence[b])
        after = dev(valence[u] - 1) + dev(valence[v] - 1) + dev(valence[a] + 1) + dev(valence[b] + 1)
        gain = before - after
        # both opposite valences must move toward 6 and the total must improve
        ok = (gain > 0) & (valence[a] < 6) & (valence[b] < 6) & (valence[u] > 3) & (valence[v] > 3) & (a != b)
        cand = np.flatnonzero(ok)
        if len(cand) == 0:
            break
        cand = cand[np.argsort(-gain[cand], kind="stable")]
        edge_set = set(map(tuple, edges.tolist()))
        face_locked = np.zeros(len(faces), dtype=bool)
        vert_locked = np.zeros(n, dtype=bool)
        fn = face_normals(vertices, faces, unit=False)
        flips = 0
        for i in cand:
            fa, fb = f0[i], f1[i]
            ui, vi, ai, bi = int(u[i]), int(v[i]), int(a[i]), int(b[i])
            if face_locked[fa] or face_locked[fb] or vert_locked[[ui, vi, ai, bi]].any():
                continue
            if (min(ai, bi), max(ai, bi)) in edge_set:
                continue
            # orient so face fa runs u -> v
            fv = faces[fa].tolist()
            k = fv.index(ui)
            if fv[(k + 1) % 3] != vi:
                ui, vi = vi, ui
            t1 = (ai, ui, bi)
            t2 = (bi, vi, ai)
            p = vertices
            n1 = np.cross(p[t1[1]] - p[t1[0]], p[t1[2]] - p[t1[0]])
            n2 = np.cross(p[t2[1]] - p[t2[0]], p[t2[2]] - p[t2[0]])
            ref = fn[fa] + fn[fb]
            if np.linalg.norm(n1) < MIN_AREA2 or np.linalg.norm(n2) < MIN_AREA2:
                continue
            if n1 @ ref <= 0 or n2 @ ref <= 0 or n1 @ n2 <= 0:
                continue
            faces[fa] = t1
            faces[fb] = t2
            face_locked[fa] = face_locked[fb] = True
            vert_locked[[ui, vi, ai, bi]] = True
            edge_set.add((min(ai, bi), max(ai, bi)))
            flips += 1
        total += flips
        if flips == 0:
            break
    return faces, total


def tangential_smooth(vertices: np.ndarray, faces: np.ndarray, weight: float) -> np.ndarray:
    """``x += weight * P_t (centroid(neighbors) - x)`` with ``P_t`` the tangent projector."""
    if weight == 0 or len(faces) == 0:
        return vertices
    n = len(vertices)
    edges, _ = unique_edges(faces)
    deg = np.bincount(edges.ravel(), minlength=n).astype(np.float64)
    acc = np.zeros_like(vertices)
    for axis in range(3):
        acc[:, axis] = np.bincount(edges[:, 0], weights=vertices[edges[:, 1], axis], minlength=n)
        acc[:, axis] += np.bincount(edges[:, 1], weights=vertices[edges[:, 0], axis], minlength=n)
    has = deg > 0
    delta = np.zeros_like(vertices)
    delta[has] = acc[has] / deg[has, None] - vertices[has]
    normals = vertex_normals(TriMesh(vertices, faces))
    delta -= normals * np.einsum("ij,ij->i", delta, normals)[:, None]
    return vertices + weight * delta


def remesh(mesh: TriMesh, target_edge: float, smoothing: float = 0.1, flip_rounds: int = 2) -> RemeshResult:
    """One remeshing pass towards ``target_edge``.

    Splits edges longer than ``4/3 target``, collapses edges shorter than
    ``4/5 target``, flips towards valence 6, then smooths tangentially.
    Non-manifold edges are left alone and counted in ``stats``.
    """
    if not target_edge > 0:
        raise ValueError("target_edge must be > 0")
    if not 0 <= smoothing < 1:
        raise ValueError("smoothing must be in [0, 1)")
    v, f = mesh.vertices, mesh.faces
    v, f, t_split, n_split = split_long_edges(v, f, SPLIT_RATIO * target_edge)
    v, f, t_collapse, n_collapse, nonmanifold = collapse_short_edges(v, f, COLLAPSE_RATIO * target_edge)
    f, n_flip = flip_edges(v, f, flip_rounds)
    v = tangential_smooth(v, f, smoothing)
    transfer = (t_collapse @ t_split).tocsr()
    colors = None if mesh.colors is None else np.clip(remap(mesh.colors, transfer), 0.0, 1.0)
    stats = {"splits": n_split, "collapses": n_collapse, "flips": n_flip, "nonmanifold_skipped": nonmanifold}
    log.debug("remesh to %.4f: %s", target_edge, stats)
    return RemeshResult(TriMesh(v, f, colors), transfer, stats)
