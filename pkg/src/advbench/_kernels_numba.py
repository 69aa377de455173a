"""Numba @njit implementations of the hot kernels.

Same contracts as _kernels_numpy; explicit loops, sequential (no prange) so
results are deterministic run to run.  cache=True persists compiled code
next to the package.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def _mirror(t, n):
    if n == 1:
        return 0
    period = 2 * n - 2
    m = t % period
    if m >= n:
        return period - m
    return m


@njit(cache=True)
def conv2d_forward(x, w):
    n, ci, h, wd = x.shape
    co, _, kh, kw = w.shape
    oh, ow = h - kh + 1, wd - kw + 1
    out = np.zeros((n, co, oh, ow))
    for b in range(n):
        for o in range(co):
            for y in range(oh):
                for xx in range(ow):
                    acc = 0.0
                    for c in range(ci):
                        for u in range(kh):
                            for v in range(kw):
                                acc += x[b, c, y + u, xx + v] * w[o, c, u, v]
                    out[b, o, y, xx] = acc
    return out


@njit(cache=True)
def conv2d_grad_input(gout, w):
    n, co, oh, ow = gout.shape
    _, ci, kh, kw = w.shape
    h, wd = oh + kh - 1, ow + kw - 1
    gx = np.zeros((n, ci, h, wd))
    for b in range(n):
        for o in range(co):
            for y in range(oh):
                for xx in range(ow):
                    g = gout[b, o, y, xx]
                    for c in range(ci):
                        for u in range(kh):
                            for v in range(kw):
                                gx[b, c, y + u, xx + v] += g * w[o, c, u, v]
    return gx


@njit(cache=True)
def conv2d_grad_weights(x, gout):
    n, ci, h, wd = x.shape
    _, co, oh, ow = gout.shape
    kh, kw = h - oh + 1, wd - ow + 1
    gw = np.zeros((co, ci, kh, kw))
    for b in range(n):
        for o in range(co):
            for y in range(oh):
                for xx in range(ow):
                    g = gout[b, o, y, xx]
                    for c in range(ci):
                        for u in range(kh):
                            for v in range(kw):
                                gw[o, c, u, v] += g * x[b, c, y + u, xx + v]
    return gw


@njit(cache=True)
def median_filter2d(plane, win):
    h, w = plane.shape
    pad = win // 2
    out = np.empty((h, w))
    buf = np.empty(win * win)
    for y in range(h):
        for x in range(w):
            k = 0
            for u in range(-pad, pad + 1):
                for v in range(-pad, pad + 1):
                    buf[k] = plane[_mirror(y + u, h), _mirror(x + v, w)]
                    k += 1
            out[y, x] = np.median(buf)
    return out


@njit(cache=True)
def blur_separable(plane, kernel):
    h, w = plane.shape
    ks = kernel.shape[0]
    pad = ks // 2
    tmp = np.empty((h, w))
    for y in range(h):
        for x in range(w):
            acc = 0.0
            for u in range(ks):
                acc += kernel[u] * plane[_mirror(y + u - pad, h), x]
            tmp[y, x] = acc
    out = np.empty((h, w))
    for y in range(h):
        for x in range(w):
            acc = 0.0
            for u in range(ks):
                acc += kernel[u] * tmp[y, _mirror(x + u - pad, w)]
            out[y, x] = acc
    return out


@njit(cache=True)
def rotate_bilinear(plane, degrees, fill):
    h, w = plane.shape
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    theta = np.deg2rad(degrees)
    c, s = np.cos(theta), np.sin(theta)
    out = np.empty((h, w))
    for y in range(h):
        for x in range(w):
            dy, dx = y - cy, x - cx
            sy = cy + c * dy - s * dx
            sx = cx + s * dy + c * dx
            y0 = int(np.floor(sy))
            x0 = int(np.floor(sx))
            fy, fx = sy - y0, sx - x0
            acc = 0.0
            for (oy, ox, wgt) in (
                (y0, x0, (1 - fy) * (1 - fx)),
                (y0, x0 + 1, (1 - fy) * fx),
                (y0 + 1, x0, fy * (1 - fx)),
                (y0 + 1, x0 + 1, fy * fx),
            ):
                if 0 <= oy < h and 0 <= ox < w:
                    acc += wgt * plane[oy, ox]
                else:
                    acc += wgt * fill
            out[y, x] = acc
    return out


@njit(cache=True)
def jsma_best_pair(target_grad, other_grad, eligible):
    n = target_grad.shape[0]
    best = -1.0
    bp, bq = -1, -1
    for p in range(n):
        if not eligible[p]:
            continue
        for q in range(p + 1, n):
            if not eligible[q]:
                continue
            alpha = target_grad[p] + target_grad[q]
            beta = other_grad[p] + other_grad[q]
            if alpha > 0.0 and beta < 0.0:
                score = alpha * -beta
                if score > best:
                    best = score
                    bp, bq = p, q
    if best <= 0.0:
        return -1, -1, 0.0
    return bp, bq, best
