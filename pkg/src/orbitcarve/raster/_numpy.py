"""Vectorized numpy versions of the rasterization kernels.

Same contracts as ``_numba``; work is expanded into (face, pixel) pairs
in face order so scatter-adds accumulate in the same order.
"""

from __future__ import annotations

import numpy as np

from ._numba import SOFTPLUS_TAIL, TAIL

_CHUNK_PAIRS = 1 << 22


def _bounds(screen, faces, pad, width, height):
    tri = screen[faces]  # (F, 3, 2)
    lo = tri.min(axis=1) - pad
    hi = tri.max(axis=1) + pad
    c0 = np.maximum(0, np.ceil(lo[:, 0] - 0.5)).astype(np.int64)
    c1 = np.minimum(width - 1, np.floor(hi[:, 0] - 0.5)).astype(np.int64)
    r0 = np.maximum(0, np.ceil(lo[:, 1] - 0.5)).astype(np.int64)
    r1 = np.minimum(height - 1, np.floor(hi[:, 1] - 0.5)).astype(np.int64)
    return c0, c1, r0, r1


def _pairs(screen, faces, fvalid, pad, width, height):
    """Yield chunks of ``(face, row, col)`` arrays covering each face's box."""
    if len(faces) == 0:
        return
    c0, c1, r0, r1 = _bounds(screen, faces, pad, width, height)
    nx = np.where(fvalid, np.maximum(c1 - c0 + 1, 0), 0)
    ny = np.where(fvalid, np.maximum(r1 - r0 + 1, 0), 0)
    counts = nx * ny
    face_ids = np.flatnonzero(counts)
    if len(face_ids) == 0:
        return
    cum = np.cumsum(counts[face_ids])
    start = 0
    while start < len(face_ids):
        base = cum[start - 1] if start else 0
        stop = int(np.searchsorted(cum, base + _CHUNK_PAIRS, side="right"))
        stop = max(stop, start + 1)
        fsel = face_ids[start:stop]
        cnt = counts[fsel]
        f = np.repeat(fsel, cnt)
        offsets = np.repeat(np.cumsum(cnt) - cnt, cnt)
        local = np.arange(len(f)) - offsets
        row = r0[f] + local // nx[f]
        col = c0[f] + local % nx[f]
        yield f, row, col
        start = stop


def softplus(x):
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def sigmoid(x):
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def signed_distance(px, py, a, b, c):
    """Vectorized signed point/triangle distance and corner gradients.

    ``a, b, c`` are ``(P, 2)``; returns ``d (P,)`` and ``grad (P, 3, 2)``.
    """
    corners = (a, b, c)
    best = np.full(px.shape, np.inf)
    edge = np.zeros(px.shape, dtype=np.int64)
    bt = np.zeros(px.shape)
    bq = np.zeros(px.shape + (2,))
    for k in range(3):
        p0 = corners[k]
        p1 = corners[(k + 1) % 3]
        e = p1 - p0
        ll = e[:, 0] * e[:, 0] + e[:, 1] * e[:, 1]
        num = (px - p0[:, 0]) * e[:, 0] + (py - p0[:, 1]) * e[:, 1]
        t = np.divide(num, ll, out=np.zeros_like(num), where=ll > 0.0)
        t = np.clip(t, 0.0, 1.0)
        qx = p0[:, 0] + t * e[:, 0]
        qy = p0[:, 1] + t * e[:, 1]
        dist = np.sqrt((px - qx) * (px - qx) + (py - qy) * (py - qy))
        better = dist < best
        best = np.where(better, dist, best)
        edge = np.where(better, k, edge)
        bt = np.where(better, t, bt)
        bq[:, 0] = np.where(better, qx, bq[:, 0])
        bq[:, 1] = np.where(better, qy, bq[:, 1])

    area2 = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
    e0 = (b[:, 0] - a[:, 0]) * (py - a[:, 1]) - (b[:, 1] - a[:, 1]) * (px - a[:, 0])
    e1 = (c[:, 0] - b[:, 0]) * (py - b[:, 1]) - (c[:, 1] - b[:, 1]) * (px - b[:, 0])
    e2 = (a[:, 0] - c[:, 0]) * (py - c[:, 1]) - (a[:, 1] - c[:, 1]) * (px - c[:, 0])
    inside = ((area2 > 0) & (e0 >= 0) & (e1 >= 0) & (e2 >= 0)) | ((area2 < 0) & (e0 <= 0) & (e1 <= 0) & (e2 <= 0))
    sign = np.where(inside, 1.0, -1.0)

    safe = np.where(best > 0.0, best, 1.0)
    ux = np.where(best > 0.0, sign * (px - bq[:, 0]) / safe, 0.0)
    uy = np.where(best > 0.0, sign * (py - bq[:, 1]) / safe, 0.0)
    grad = np.zeros(px.shape + (3, 2))
    rows = np.arange(len(px))
    start = edge
    end = (edge + 1) % 3
    grad[rows, start, 0] = -ux * (1.0 - bt)
    grad[rows, start, 1] = -uy * (1.0 - bt)
    grad[rows, end, 0] = -ux * bt
    grad[rows, end, 1] = -uy * bt
    return sign * best, grad


def _ray_weights(vc, faces, f, row, col, fx, fy, cx, cy):
    v = vc[faces[f]]  # (P, 3, 3)
    d = np.stack([(col + 0.5 - cx) / fx, (row + 0.5 - cy) / fy, np.ones(len(f))], axis=1)
    w = np.stack(
        [np.einsum("pi,pi->p", d, np.cross(v[:, (k + 1) % 3], v[:, (k + 2) % 3])) for k in range(3)],
        axis=1,
    )
    return w, d, v


def forward(vc, screen, faces, fvalid, width, height, fx, fy, cx, cy, sigma, soft):
    face_id = np.full((height, width), -1, dtype=np.int64)
    depth = np.full((height, width), np.inf)
    bary = np.zeros((height, width, 3))
    log_bg = np.zeros(height * width)
    pad = 3.0 * sigma if soft else 0.0
    best_pix, best_z, best_f, best_b = [], [], [], []
    for f, row, col in _pairs(screen, faces, fvalid, pad, width, height):
        pix = row * width + col
        if soft:
            tri = screen[faces[f]]
            d, _ = signed_distance(col + 0.5, row + 0.5, tri[:, 0], tri[:, 1], tri[:, 2])
            x = d / sigma
            term = np.where(x > -TAIL, softplus(x) - SOFTPLUS_TAIL, 0.0)
            log_bg -= np.bincount(pix, weights=term, minlength=height * width)
        w, _, v = _ray_weights(vc, faces, f, row, col, fx, fy, cx, cy)
        inside = np.all(w >= 0, axis=1) | np.all(w <= 0, axis=1)
        s = w.sum(axis=1)
        inside &= s != 0.0
        b = w[inside] / s[inside, None]
        z = b[:, 0] * v[inside, 0, 2] + b[:, 1] * v[inside, 1, 2] + b[:, 2] * v[inside, 2, 2]
        best_pix.append(pix[inside])
        best_z.append(z)
        best_f.append(f[inside])
        best_b.append(b)
    if best_pix:
        pix = np.concatenate(best_pix)
        z = np.concatenate(best_z)
        fid = np.concatenate(best_f)
        b = np.concatenate(best_b)
        # nearest depth wins, ties to the lower face index
        order = np.lexsort((fid, z, pix))
        pix, z, fid, b = pix[order], z[order], fid[order], b[order]
        first = np.ones(len(pix), dtype=bool)
        first[1:] = pix[1:] != pix[:-1]
        rr, cc = np.divmod(pix[first], width)
        face_id[rr, cc] = fid[first]
        depth[rr, cc] = z[first]
        bary[rr, cc] = b[first]
    return face_id, depth, bary, log_bg.reshape(height, width)


def backward_soft(screen, faces, fvalid, width, height, sigma, mask, grad_mask):
    gs = np.zeros((screen.shape[0], 2))
    pad = 3.0 * sigma
    gm = grad_mask.ravel()
    one_minus = 1.0 - mask.ravel()
    for f, row, col in _pairs(screen, faces, fvalid, pad, width, height):
        pix = row * width + col
        keep = gm[pix] != 0.0
        f, row, col, pix = f[keep], row[keep], col[keep], pix[keep]
        if len(f) == 0:
            continue
        tri = screen[faces[f]]
        d, grad = signed_distance(col + 0.5, row + 0.5, tri[:, 0], tri[:, 1], tri[:, 2])
        x = d / sigma
        k = np.where(x > -TAIL, gm[pix] * one_minus[pix] * sigmoid(x) / sigma, 0.0)
        contrib = grad * k[:, None, None]
        for corner in range(3):
            vid = faces[f, corner]
            for axis in range(2):
                gs[:, axis] += np.bincount(vid, weights=contrib[:, corner, axis], minlength=len(gs))
    return gs


def backward_hard(vc, nc, colors, faces, face_id, bary, fx, fy, cx, cy, grad_normal, grad_color, use_normal, use_color):
    n = vc.shape[0]
    g_vc = np.zeros((n, 3))
    g_nc = np.zeros((n, 3))
    g_col = np.zeros((n, 3))
    row, col = np.nonzero(face_id >= 0)
    if len(row) == 0:
        return g_vc, g_nc, g_col
    f = face_id[row, col]
    b = bary[row, col]
    idx = faces[f]
    gb = np.zeros_like(b)
    if use_normal:
        g = grad_normal[row, col]
        m = np.einsum("pk,pki->pi", b, nc[idx])
        ln = np.linalg.norm(m, axis=1)
        ok = (ln > 0) & np.any(g != 0, axis=1)
        u = m[ok] / ln[ok, None]
        rvec = (g[ok] - u * np.einsum("pi,pi->p", u, g[ok])[:, None]) / ln[ok, None]
        gb[ok] += np.einsum("pi,pki->pk", rvec, nc[idx[ok]])
        for k in range(3):
            contrib = b[ok, k, None] * rvec
            for axis in range(3):
                g_nc[:, axis] += np.bincount(idx[ok, k], weights=contrib[:, axis], minlength=n)
    if use_color:
        g = grad_color[row, col]
        gb += np.einsum("pi,pki->pk", g, colors[idx])
        for k in range(3):
            contrib = b[:, k, None] * g
            for axis in range(3):
                g_col[:, axis] += np.bincount(idx[:, k], weights=contrib[:, axis], minlength=n)
    w, d, v = _ray_weights(vc, faces, f, row, col, fx, fy, cx, cy)
    s = w.sum(axis=1)
    gw = (gb - np.einsum("pk,pk->p", gb, b)[:, None]) / s[:, None]
    for k in range(3):
        a_id = idx[:, (k + 1) % 3]
        b_id = idx[:, (k + 2) % 3]
        ga = gw[:, k, None] * np.cross(v[:, (k + 2) % 3], d)
        gbv = gw[:, k, None] * np.cross(d, v[:, (k + 1) % 3])
        for axis in range(3):
            g_vc[:, axis] += np.bincount(a_id, weights=ga[:, axis], minlength=n)
            g_vc[:, axis] += np.bincount(b_id, weights=gbv[:, axis], minlength=n)
    return g_vc, g_nc, g_col
