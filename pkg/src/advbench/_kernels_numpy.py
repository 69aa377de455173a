"""Pure-numpy implementations of the hot kernels.

Fallback backend for environments without numba (or when
ADVBENCH_BACKEND=numpy).  Each function here has a loop-based twin in
_kernels_numba with identical semantics; floating-point results may differ
in the last bits because summation order differs.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def mirror_indices(n: int, pad: int) -> np.ndarray:
    """Source indices for reflect padding (edge not repeated) of width pad."""
    if n == 1:
        return np.zeros(n + 2 * pad, dtype=np.int64)
    t = np.arange(-pad, n + pad)
    period = 2 * n - 2
    m = t % period
    return np.where(m >= n, period - m, m)


def conv2d_forward(x, w):
    # x (n, ci, h, w), w (co, ci, kh, kw) -> (n, co, h-kh+1, w-kw+1)
    kh, kw = w.shape[2], w.shape[3]
    win = sliding_window_view(x, (kh, kw), axis=(2, 3))
    return np.einsum("ncyxuv,ocuv->noyx", win, w, optimize=True)


def conv2d_grad_input(gout, w):
    # gout (n, co, oh, ow), w (co, ci, kh, kw) -> (n, ci, h, w)
    kh, kw = w.shape[2], w.shape[3]
    padded = np.pad(gout, ((0, 0), (0, 0), (kh - 1, kh - 1), (kw - 1, kw - 1)))
    win = sliding_window_view(padded, (kh, kw), axis=(2, 3))
    return np.einsum("noyxuv,ocuv->ncyx", win, w[:, :, ::-1, ::-1], optimize=True)


def conv2d_grad_weights(x, gout):
    # x (n, ci, h, w), gout (n, co, oh, ow) -> (co, ci, kh, kw)
    oh, ow = gout.shape[2], gout.shape[3]
    win = sliding_window_view(x, (oh, ow), axis=(2, 3))
    return np.einsum("ncuvyx,noyx->ocuv", win, gout, optimize=True)


def median_filter2d(plane, win):
    pad = win // 2
    ri = mirror_indices(plane.shape[0], pad)
    ci = mirror_indices(plane.shape[1], pad)
    padded = plane[np.ix_(ri, ci)]
    windows = sliding_window_view(padded, (win, win))
    return np.median(windows, axis=(2, 3))


def blur_separable(plane, kernel):
    pad = len(kernel) // 2
    ri = mirror_indices(plane.shape[0], pad)
    tmp = sliding_window_view(plane[ri, :], len(kernel), axis=0) @ kernel
    ci = mirror_indices(plane.shape[1], pad)
    return sliding_window_view(tmp[:, ci], len(kernel), axis=1) @ kernel


def rotate_bilinear(plane, degrees, fill):
    h, w = plane.shape
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    theta = np.deg2rad(degrees)
    c, s = np.cos(theta), np.sin(theta)
    yy, xx = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    dy, dx = yy - cy, xx - cx
    sy = cy + c * dy - s * dx
    sx = cx + s * dy + c * dx
    y0 = np.floor(sy).astype(np.int64)
    x0 = np.floor(sx).astype(np.int64)
    fy, fx = sy - y0, sx - x0
    out = np.zeros_like(plane)
    for oy, ox, wgt in (
        (y0, x0, (1 - fy) * (1 - fx)),
        (y0, x0 + 1, (1 - fy) * fx),
        (y0 + 1, x0, fy * (1 - fx)),
        (y0 + 1, x0 + 1, fy * fx),
    ):
        inside = (oy >= 0) & (oy < h) & (ox >= 0) & (ox < w)
        vals = np.where(inside, plane[np.clip(oy, 0, h - 1), np.clip(ox, 0, w - 1)], fill)
        out += wgt * vals
    return out


def jsma_best_pair(target_grad, other_grad, eligible):
    """Best feature pair (p, q), p < q, maximizing (a_p+a_q) * |b_p+b_q|.

    Candidate pairs need a_p+a_q > 0 and b_p+b_q < 0 and both features
    eligible.  Returns (-1, -1, 0.0) when no pair qualifies; ties resolve to
    the lexicographically first pair.
    """
    n = target_grad.shape[0]
    alpha = target_grad[:, None] + target_grad[None, :]
    beta = other_grad[:, None] + other_grad[None, :]
    ok = (
        (alpha > 0.0)
        & (beta < 0.0)
        & eligible[:, None]
        & eligible[None, :]
        & (np.arange(n)[:, None] < np.arange(n)[None, :])
    )
    scores = np.where(ok, alpha * -beta, -1.0)
    flat = int(np.argmax(scores))
    p, q = divmod(flat, n)
    best = scores[p, q]
    if best <= 0.0:
        return -1, -1, 0.0
    return p, q, float(best)
