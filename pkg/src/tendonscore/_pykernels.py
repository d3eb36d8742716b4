"""Numpy implementations of the hot kernels.

Used when the compiled extension is not available. Contracts match
``_ckernels``: float32 tensors in and out, float64 accumulation.
"""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def conv2d(x, w, b, stride, pad, groups):
    C, H, W = x.shape
    O, Cg, KH, KW = w.shape
    Og = O // groups
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad))) if pad else x
    # (C, OH, OW, KH, KW) after striding
    win = sliding_window_view(xp, (KH, KW), axis=(1, 2))[:, ::stride, ::stride]
    OH, OW = win.shape[1], win.shape[2]
    out = np.empty((O, OH, OW), dtype=np.float32)
    for g in range(groups):
        cols = win[g * Cg:(g + 1) * Cg].transpose(1, 2, 0, 3, 4)
        cols = cols.reshape(OH * OW, Cg * KH * KW).astype(np.float64)
        wg = w[g * Og:(g + 1) * Og].reshape(Og, -1).astype(np.float64)
        res = cols @ wg.T + b[g * Og:(g + 1) * Og].astype(np.float64)
        out[g * Og:(g + 1) * Og] = res.T.reshape(Og, OH, OW)
    return out


def max_pool(x, size, stride):
    win = sliding_window_view(x, (size, size), axis=(1, 2))[:, ::stride, ::stride]
    return np.ascontiguousarray(win.max(axis=(3, 4)), dtype=np.float32)


def local_response_norm(x, depth, alpha, beta, k):
    C = x.shape[0]
    half = depth // 2
    sq = x.astype(np.float64) ** 2
    s = np.zeros_like(sq)
    # add neighbours in increasing channel order, matching the compiled loop
    for c in range(C):
        for j in range(max(0, c - half), min(C, c + half + 1)):
            s[c] += sq[j]
    return (x / (k + alpha * s) ** beta).astype(np.float32)


def bilinear_sample(img, xs, ys, fill):
    H, W = img.shape
    inside = (xs >= 0.0) & (xs <= W - 1) & (ys >= 0.0) & (ys <= H - 1)
    xc = np.where(inside, xs, 0.0)
    yc = np.where(inside, ys, 0.0)
    x0 = np.floor(xc).astype(np.intp)
    y0 = np.floor(yc).astype(np.intp)
    x1 = np.minimum(x0 + 1, W - 1)
    y1 = np.minimum(y0 + 1, H - 1)
    fx = xc - x0
    fy = yc - y0
    # lerp form: exact on constant neighbourhoods
    top = img[y0, x0] + fx * (img[y0, x1] - img[y0, x0])
    bot = img[y1, x0] + fx * (img[y1, x1] - img[y1, x0])
    out = top + fy * (bot - top)
    return np.where(inside, out, fill)
