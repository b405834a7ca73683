"""Compiled inner loops (numba). Pure functions on plain arrays."""
import math

import numpy as np
from numba import njit


@njit(cache=True)
def _seg_dist(px, py, ax, ay, bx, by):
    abx = bx - ax
    aby = by - ay
    t = ((px - ax) * abx + (py - ay) * aby) / (abx * abx + aby * aby)
    if t < 0.0:
        t = 0.0
    elif t > 1.0:
        t = 1.0
    fx = ax + t * abx - px
    fy = ay + t * aby - py
    return math.sqrt(fx * fx + fy * fy), t


@njit(cache=True)
def build_buckets(a, b, ox, oy, size, nbx, nby):
    """CSR lists of the segments overlapping each bucket."""
    m = a.shape[0]
    counts = np.zeros(nbx * nby + 1, np.int64)
    for s in range(m):
        i0 = int((min(a[s, 0], b[s, 0]) - ox) / size)
        i1 = int((max(a[s, 0], b[s, 0]) - ox) / size)
        j0 = int((min(a[s, 1], b[s, 1]) - oy) / size)
        j1 = int((max(a[s, 1], b[s, 1]) - oy) / size)
        for j in range(max(j0, 0), min(j1, nby - 1) + 1):
            for i in range(max(i0, 0), min(i1, nbx - 1) + 1):
                counts[j * nbx + i + 1] += 1
    offsets = np.cumsum(counts)
    fill = offsets[:-1].copy()
    items = np.empty(offsets[-1], np.int64)
    for s in range(m):
        i0 = int((min(a[s, 0], b[s, 0]) - ox) / size)
        i1 = int((max(a[s, 0], b[s, 0]) - ox) / size)
        j0 = int((min(a[s, 1], b[s, 1]) - oy) / size)
        j1 = int((max(a[s, 1], b[s, 1]) - oy) / size)
        for j in range(max(j0, 0), min(j1, nby - 1) + 1):
            for i in range(max(i0, 0), min(i1, nbx - 1) + 1):
                k = j * nbx + i
                items[fill[k]] = s
                fill[k] += 1
    return offsets, items


@njit(cache=True)
def nearest_bucketed(points, a, b, offsets, items, ox, oy, size, nbx, nby):
    """Exact nearest segment by expanding square rings of buckets.

    After ring ``r`` is scanned, any unscanned segment is at least ``r * size``
    away from the query point, which gives an exact stopping rule.
    """
    n = points.shape[0]
    dist = np.empty(n)
    seg = np.empty(n, np.int64)
    tpar = np.empty(n)
    for q in range(n):
        px = points[q, 0]
        py = points[q, 1]
        ci = int(math.floor((px - ox) / size))
        cj = int(math.floor((py - oy) / size))
        rmax = max(max(ci, nbx - 1 - ci), max(cj, nby - 1 - cj))
        best = np.inf
        best_s = -1
        best_t = 0.0
        r = 0
        while r <= rmax:
            if best <= (r - 1) * size:
                break
            for j in range(cj - r, cj + r + 1):
                if j < 0 or j >= nby:
                    continue
                ring_row = j == cj - r or j == cj + r
                step = 1 if ring_row else 2 * r
                i = ci - r
                while i <= ci + r:
                    if 0 <= i < nbx:
                        k = j * nbx + i
                        for e in range(offsets[k], offsets[k + 1]):
                            s = items[e]
                            d, t = _seg_dist(px, py, a[s, 0], a[s, 1], b[s, 0], b[s, 1])
                            if d < best or (d == best and s < best_s):
                                best = d
                                best_s = s
                                best_t = t
                    if step == 0:
                        break
                    i += step
            r += 1
        dist[q] = best
        seg[q] = best_s
        tpar[q] = best_t
    return dist, seg, tpar


@njit(cache=True)
def brute_nearest(points, a, b):
    n = points.shape[0]
    m = a.shape[0]
    dist = np.empty(n)
    seg = np.empty(n, np.int64)
    tpar = np.empty(n)
    for q in range(n):
        best = np.inf
        bs = -1
        bt = 0.0
        for s in range(m):
            d, t = _seg_dist(points[q, 0], points[q, 1], a[s, 0], a[s, 1], b[s, 0], b[s, 1])
            if d < best:
                best = d
                bs = s
                bt = t
        dist[q] = best
        seg[q] = bs
        tpar[q] = bt
    return dist, seg, tpar


@njit(cache=True)
def pdhg_rof(g, w, wb, px, py, inv_dx, tau, sigma, gamma, n_iter, anisotropic):
    """Accelerated primal-dual iterations for ``min_w TV(w) + 0.5 |w - g|^2``.

    TV uses forward differences scaled by ``inv_dx`` with Neumann boundary;
    the dual field satisfies ``|p| <= 1`` (isotropic) or ``|p_x|, |p_y| <= 1``
    (anisotropic). Arrays are updated in place; returns the final step sizes.
    """
    ny, nx = g.shape
    for _ in range(n_iter):
        for j in range(ny):
            for i in range(nx):
                gx = (wb[j, i + 1] - wb[j, i]) * inv_dx if i < nx - 1 else 0.0
                gy = (wb[j + 1, i] - wb[j, i]) * inv_dx if j < ny - 1 else 0.0
                qx = px[j, i] + sigma * gx
                qy = py[j, i] + sigma * gy
                if anisotropic:
                    qx = min(1.0, max(-1.0, qx))
                    qy = min(1.0, max(-1.0, qy))
                else:
                    nrm = math.sqrt(qx * qx + qy * qy)
                    if nrm > 1.0:
                        qx /= nrm
                        qy /= nrm
                px[j, i] = qx if i < nx - 1 else 0.0
                py[j, i] = qy if j < ny - 1 else 0.0
        theta = 1.0 / math.sqrt(1.0 + 2.0 * gamma * tau)
        for j in range(ny):
            for i in range(nx):
                dv = px[j, i] - (px[j, i - 1] if i > 0 else 0.0)
                dv += py[j, i] - (py[j - 1, i] if j > 0 else 0.0)
                wn = (w[j, i] + tau * (dv * inv_dx + g[j, i])) / (1.0 + tau)
                wb[j, i] = wn + theta * (wn - w[j, i])
                w[j, i] = wn
        tau *= theta
        sigma /= theta
    return tau, sigma


@njit(cache=True)
def divergence(px, py, inv_dx):
    ny, nx = px.shape
    out = np.empty_like(px)
    for j in range(ny):
        for i in range(nx):
            dv = px[j, i] - (px[j, i - 1] if i > 0 else 0.0)
            dv += py[j, i] - (py[j - 1, i] if j > 0 else 0.0)
            out[j, i] = dv * inv_dx
    return out


@njit(cache=True)
def two_point_sweep(pts, nrm, eps):
    """Exhaustive sweep over ordered pairs ``i != j``.

    Returns ``(max |S|, i, j, S_ij, max |nu_i - nu_j| / |x_i - x_j|)`` where
    ``S_ij = (x_i - x_j) . nu_i / (|x_i - x_j|^2 + eps)``.
    """
    n = pts.shape[0]
    best = -1.0
    bi = 0
    bj = 0
    bval = 0.0
    lip = 0.0
    for i in range(n):
        xi = pts[i, 0]
        yi = pts[i, 1]
        nx = nrm[i, 0]
        ny = nrm[i, 1]
        for j in range(n):
            if j == i:
                continue
            dx = xi - pts[j, 0]
            dy = yi - pts[j, 1]
            r2 = dx * dx + dy * dy
            if r2 == 0.0:
                continue
            s = (dx * nx + dy * ny) / (r2 + eps)
            a = abs(s)
            if a > best:
                best = a
                bi = i
                bj = j
                bval = s
            if j > i:
                ex = nx - nrm[j, 0]
                ey = ny - nrm[j, 1]
                q = math.sqrt((ex * ex + ey * ey) / r2)
                if q > lip:
                    lip = q
    return best, bi, bj, bval, lip
