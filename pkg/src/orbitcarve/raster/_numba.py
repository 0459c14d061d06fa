"""Numba rasterization kernels (forward + backward), one view per call.

Pixel ``(row, col)`` has its center at ``(col + 0.5, row + 0.5)``.
Barycentrics come from ray/triangle signed volumes, which makes them
perspective-correct: ``w_k = d . (V_{k+1} x V_{k+2})`` with ``d`` the pixel
ray ``((x - cx) / fx, (y - cy) / fy, 1)`` and ``V`` camera-space corners.
"""

from __future__ import annotations

import math

import numpy as np

from .._accel import njit


@njit
def softplus(x):
    if x > 0.0:
        return x + math.log1p(math.exp(-x))
    return math.log1p(math.exp(x))


@njit
def sigmoid(x):
    if x >= 0.0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


# Soft coverage uses the sigmoid rescaled to reach exactly 0 at d = -TAIL sigma,
# so a face leaving a pixel's 3-sigma window changes nothing discontinuously:
# log(1 - s') = softplus(-TAIL) - softplus(d / sigma).
TAIL = 3.0
SOFTPLUS_TAIL = math.log1p(math.exp(-TAIL))


@njit
def _inside(px, py, ax, ay, bx, by, cx, cy):
    area2 = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
    e0 = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
    e1 = (cx - bx) * (py - by) - (cy - by) * (px - bx)
    e2 = (ax - cx) * (py - cy) - (ay - cy) * (px - cx)
    if area2 > 0.0:
        return e0 >= 0.0 and e1 >= 0.0 and e2 >= 0.0
    if area2 < 0.0:
        return e0 <= 0.0 and e1 <= 0.0 and e2 <= 0.0
    return False


@njit
def _segment(px, py, x0, y0, x1, y1):
    """Squared distance to a segment and the clamped parameter of the foot."""
    ex = x1 - x0
    ey = y1 - y0
    ll = ex * ex + ey * ey
    t = 0.0
    if ll > 0.0:
        t = ((px - x0) * ex + (py - y0) * ey) / ll
        if t < 0.0:
            t = 0.0
        elif t > 1.0:
            t = 1.0
    qx = x0 + t * ex - px
    qy = y0 + t * ey - py
    return qx * qx + qy * qy, t


@njit
def signed_distance_value(px, py, ax, ay, bx, by, cx, cy):
    d0, _ = _segment(px, py, ax, ay, bx, by)
    d1, _ = _segment(px, py, bx, by, cx, cy)
    d2, _ = _segment(px, py, cx, cy, ax, ay)
    d = math.sqrt(min(d0, d1, d2))
    return d if _inside(px, py, ax, ay, bx, by, cx, cy) else -d


@njit
def signed_distance(px, py, ax, ay, bx, by, cx, cy):
    """Signed distance from a point to a 2-D triangle (positive inside).

    Returns ``(d, gax, gay, gbx, gby, gcx, gcy)`` where ``g*`` is the
    gradient of ``d`` with respect to the corners (envelope theorem on the
    nearest edge; zero where the distance is zero).
    """
    d0, t0 = _segment(px, py, ax, ay, bx, by)
    d1, t1 = _segment(px, py, bx, by, cx, cy)
    d2, t2 = _segment(px, py, cx, cy, ax, ay)
    # ties go to the lower edge index
    edge = 0
    best = d0
    bt = t0
    if d1 < best:
        edge, best, bt = 1, d1, t1
    if d2 < best:
        edge, best, bt = 2, d2, t2
    best = math.sqrt(best)
    sign = 1.0 if _inside(px, py, ax, ay, bx, by, cx, cy) else -1.0

    gax = gay = gbx = gby = gcx = gcy = 0.0
    if best > 0.0:
        if edge == 0:
            x0, y0, x1, y1 = ax, ay, bx, by
        elif edge == 1:
            x0, y0, x1, y1 = bx, by, cx, cy
        else:
            x0, y0, x1, y1 = cx, cy, ax, ay
        # d(dist)/d(start) = -u (1 - t), d(dist)/d(end) = -u t, u = (p - q) / dist
        ux = sign * (px - (x0 + bt * (x1 - x0))) / best
        uy = sign * (py - (y0 + bt * (y1 - y0))) / best
        s0x = -ux * (1.0 - bt)
        s0y = -uy * (1.0 - bt)
        s1x = -ux * bt
        s1y = -uy * bt
        if edge == 0:
            gax, gay, gbx, gby = s0x, s0y, s1x, s1y
        elif edge == 1:
            gbx, gby, gcx, gcy = s0x, s0y, s1x, s1y
        else:
            gcx, gcy, gax, gay = s0x, s0y, s1x, s1y
    return sign * best, gax, gay, gbx, gby, gcx, gcy


@njit
def _face_bounds(x0, x1, x2, y0, y1, y2, pad, width, height):
    lo_x = min(x0, x1, x2) - pad
    hi_x = max(x0, x1, x2) + pad
    lo_y = min(y0, y1, y2) - pad
    hi_y = max(y0, y1, y2) + pad
    # pixel centers at integer + 0.5
    c0 = max(0, int(math.ceil(lo_x - 0.5)))
    c1 = min(width - 1, int(math.floor(hi_x - 0.5)))
    r0 = max(0, int(math.ceil(lo_y - 0.5)))
    r1 = min(height - 1, int(math.floor(hi_y - 0.5)))
    return c0, c1, r0, r1


@njit
def forward(vc, screen, faces, fvalid, width, height, fx, fy, cx, cy, sigma, soft):
    """Z-buffered hard channels plus the soft-coverage log background.

    Returns ``face_id, depth, bary, log_bg`` where ``log_bg`` holds
    ``sum_f log(1 - s'(d_f))`` per pixel (zero when ``soft`` is false).
    """
    face_id = np.full((height, width), -1, dtype=np.int64)
    depth = np.full((height, width), np.inf)
    bary = np.zeros((height, width, 3))
    log_bg = np.zeros((height, width))
    pad = 3.0 * sigma if soft else 0.0
    inv_sigma = 1.0 / sigma if soft else 0.0
    for f in range(faces.shape[0]):
        if not fvalid[f]:
            continue
        i0 = faces[f, 0]
        i1 = faces[f, 1]
        i2 = faces[f, 2]
        ax, ay = screen[i0, 0], screen[i0, 1]
        bx, by = screen[i1, 0], screen[i1, 1]
        qx, qy = screen[i2, 0], screen[i2, 1]
        c0, c1, r0, r1 = _face_bounds(ax, bx, qx, ay, by, qy, pad, width, height)
        if c0 > c1 or r0 > r1:
            continue
        # per-face cross products for the ray barycentrics
        v0x, v0y, v0z = vc[i0, 0], vc[i0, 1], vc[i0, 2]
        v1x, v1y, v1z = vc[i1, 0], vc[i1, 1], vc[i1, 2]
        v2x, v2y, v2z = vc[i2, 0], vc[i2, 1], vc[i2, 2]
        k0x = v1y * v2z - v1z * v2y
        k0y = v1z * v2x - v1x * v2z
        k0z = v1x * v2y - v1y * v2x
        k1x = v2y * v0z - v2z * v0y
        k1y = v2z * v0x - v2x * v0z
        k1z = v2x * v0y - v2y * v0x
        k2x = v0y * v1z - v0z * v1y
        k2y = v0z * v1x - v0x * v1z
        k2z = v0x * v1y - v0y * v1x
        for r in range(r0, r1 + 1):
            py = r + 0.5
            dy = (py - cy) / fy
            for c in range(c0, c1 + 1):
                px = c + 0.5
                if soft:
                    x = signed_distance_value(px, py, ax, ay, bx, by, qx, qy) * inv_sigma
                    if x > -TAIL:
                        log_bg[r, c] -= softplus(x) - SOFTPLUS_TAIL
                dx = (px - cx) / fx
                w0 = dx * k0x + dy * k0y + k0z
                w1 = dx * k1x + dy * k1y + k1z
                w2 = dx * k2x + dy * k2y + k2z
                if not ((w0 >= 0.0 and w1 >= 0.0 and w2 >= 0.0) or (w0 <= 0.0 and w1 <= 0.0 and w2 <= 0.0)):
                    continue
                s = w0 + w1 + w2
                if s == 0.0:
                    continue
                b0 = w0 / s
                b1 = w1 / s
                b2 = w2 / s
                z = b0 * v0z + b1 * v1z + b2 * v2z
                if z < depth[r, c]:
                    depth[r, c] = z
                    face_id[r, c] = f
                    bary[r, c, 0] = b0
                    bary[r, c, 1] = b1
                    bary[r, c, 2] = b2
    return face_id, depth, bary, log_bg


@njit
def backward_soft(screen, faces, fvalid, width, height, sigma, mask, grad_mask):
    """Gradient of the soft mask term w.r.t. screen positions ``(n, 2)``."""
    gs = np.zeros((screen.shape[0], 2))
    pad = 3.0 * sigma
    inv_sigma = 1.0 / sigma
    for f in range(faces.shape[0]):
        if not fvalid[f]:
            continue
        i0 = faces[f, 0]
        i1 = faces[f, 1]
        i2 = faces[f, 2]
        ax, ay = screen[i0, 0], screen[i0, 1]
        bx, by = screen[i1, 0], screen[i1, 1]
        qx, qy = screen[i2, 0], screen[i2, 1]
        c0, c1, r0, r1 = _face_bounds(ax, bx, qx, ay, by, qy, pad, width, height)
        a0 = a1 = a2 = a3 = a4 = a5 = 0.0
        for r in range(r0, r1 + 1):
            py = r + 0.5
            for c in range(c0, c1 + 1):
                g = grad_mask[r, c]
                if g == 0.0:
                    continue
                px = c + 0.5
                d, gax, gay, gbx, gby, gcx, gcy = signed_distance(px, py, ax, ay, bx, by, qx, qy)
                x = d * inv_sigma
                if x <= -TAIL:
                    continue
                # dM/dd = (1 - M) s(d) / sigma inside the window
                k = g * (1.0 - mask[r, c]) * sigmoid(x) * inv_sigma
                a0 += k * gax
                a1 += k * gay
                a2 += k * gbx
                a3 += k * gby
                a4 += k * gcx
                a5 += k * gcy
        gs[i0, 0] += a0
        gs[i0, 1] += a1
        gs[i1, 0] += a2
        gs[i1, 1] += a3
        gs[i2, 0] += a4
        gs[i2, 1] += a5
    return gs


@njit
def backward_hard(vc, nc, colors, faces, face_id, bary, fx, fy, cx, cy, grad_normal, grad_color, use_normal, use_color):
    """Gradients of the interpolated normal/color channels.

    Returns ``(g_vc, g_nc, g_col)``: camera-space positions, camera-space
    unit vertex normals, and vertex colors.
    """
    n = vc.shape[0]
    g_vc = np.zeros((n, 3))
    g_nc = np.zeros((n, 3))
    g_col = np.zeros((n, 3))
    height, width = face_id.shape
    gb = np.zeros(3)
    idx = np.zeros(3, dtype=np.int64)
    for r in range(height):
        dy = (r + 0.5 - cy) / fy
        for c in range(width):
            f = face_id[r, c]
            if f < 0:
                continue
            dx = (c + 0.5 - cx) / fx
            for k in range(3):
                idx[k] = faces[f, k]
                gb[k] = 0.0
            b0 = bary[r, c, 0]
            b1 = bary[r, c, 1]
            b2 = bary[r, c, 2]
            if use_normal:
                gx, gy, gz = grad_normal[r, c, 0], grad_normal[r, c, 1], grad_normal[r, c, 2]
                if gx != 0.0 or gy != 0.0 or gz != 0.0:
                    mx = b0 * nc[idx[0], 0] + b1 * nc[idx[1], 0] + b2 * nc[idx[2], 0]
                    my = b0 * nc[idx[0], 1] + b1 * nc[idx[1], 1] + b2 * nc[idx[2], 1]
                    mz = b0 * nc[idx[0], 2] + b1 * nc[idx[1], 2] + b2 * nc[idx[2], 2]
                    ln = math.sqrt(mx * mx + my * my + mz * mz)
                    if ln > 0.0:
                        ux, uy, uz = mx / ln, my / ln, mz / ln
                        dot = ux * gx + uy * gy + uz * gz
                        rx = (gx - ux * dot) / ln
                        ry = (gy - uy * dot) / ln
                        rz = (gz - uz * dot) / ln
                        for k in range(3):
                            v = idx[k]
                            bk = bary[r, c, k]
                            gb[k] += rx * nc[v, 0] + ry * nc[v, 1] + rz * nc[v, 2]
                            g_nc[v, 0] += bk * rx
                            g_nc[v, 1] += bk * ry
                            g_nc[v, 2] += bk * rz
            if use_color:
                gx, gy, gz = grad_color[r, c, 0], grad_color[r, c, 1], grad_color[r, c, 2]
                if gx != 0.0 or gy != 0.0 or gz != 0.0:
                    for k in range(3):
                        v = idx[k]
                        bk = bary[r, c, k]
                        gb[k] += gx * colors[v, 0] + gy * colors[v, 1] + gz * colors[v, 2]
                        g_col[v, 0] += bk * gx
                        g_col[v, 1] += bk * gy
                        g_col[v, 2] += bk * gz
            if gb[0] == 0.0 and gb[1] == 0.0 and gb[2] == 0.0:
                continue
            # b = w / sum(w)  =>  dL/dw_j = (gb_j - sum_k gb_k b_k) / sum(w)
            v0 = idx[0]
            v1 = idx[1]
            v2 = idx[2]
            w0 = dx * (vc[v1, 1] * vc[v2, 2] - vc[v1, 2] * vc[v2, 1]) + dy * (vc[v1, 2] * vc[v2, 0] - vc[v1, 0] * vc[v2, 2]) + (vc[v1, 0] * vc[v2, 1] - vc[v1, 1] * vc[v2, 0])
            w1 = dx * (vc[v2, 1] * vc[v0, 2] - vc[v2, 2] * vc[v0, 1]) + dy * (vc[v2, 2] * vc[v0, 0] - vc[v2, 0] * vc[v0, 2]) + (vc[v2, 0] * vc[v0, 1] - vc[v2, 1] * vc[v0, 0])
            w2 = dx * (vc[v0, 1] * vc[v1, 2] - vc[v0, 2] * vc[v1, 1]) + dy * (vc[v0, 2] * vc[v1, 0] - vc[v0, 0] * vc[v1, 2]) + (vc[v0, 0] * vc[v1, 1] - vc[v0, 1] * vc[v1, 0])
            s = w0 + w1 + w2
            mean = gb[0] * b0 + gb[1] * b1 + gb[2] * b2
            for k in range(3):
                gw = (gb[k] - mean) / s
                if gw == 0.0:
                    continue
                a = idx[(k + 1) % 3]
                b = idx[(k + 2) % 3]
                # w_k = d . (A x B): dA = B x d, dB = d x A
                g_vc[a, 0] += gw * (vc[b, 1] * 1.0 - vc[b, 2] * dy)
                g_vc[a, 1] += gw * (vc[b, 2] * dx - vc[b, 0] * 1.0)
                g_vc[a, 2] += gw * (vc[b, 0] * dy - vc[b, 1] * dx)
                g_vc[b, 0] += gw * (dy * vc[a, 2] - 1.0 * vc[a, 1])
                g_vc[b, 1] += gw * (1.0 * vc[a, 0] - dx * vc[a, 2])
                g_vc[b, 2] += gw * (dx * vc[a, 1] - dy * vc[a, 0])
    return g_vc, g_nc, g_col
