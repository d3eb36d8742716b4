# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops for the CNN layers and bilinear resampling.

Convolution gathers patches in C and hands the product to BLAS dgemm.
Same contracts as ``_pykernels``: float32 tensors in and out, float64
accumulation.
"""
import numpy as np

from libc.math cimport pow, floor
from scipy.linalg.cython_blas cimport dgemm


def conv2d(const float[:, :, ::1] x, const float[:, :, :, ::1] w,
           const float[::1] b, int stride, int pad, int groups):
    cdef int C = x.shape[0], H = x.shape[1], W = x.shape[2]
    cdef int O = w.shape[0], Cg = w.shape[1], KH = w.shape[2], KW = w.shape[3]
    cdef int OH = (H + 2 * pad - KH) // stride + 1
    cdef int OW = (W + 2 * pad - KW) // stride + 1
    cdef int Og = O // groups
    cdef int K = Cg * KH * KW
    cdef int P = OH * OW
    cols_arr = np.empty((K, P), dtype=np.float64)
    res_arr = np.empty((O, P), dtype=np.float64)
    wd_arr = np.asarray(w, dtype=np.float64).reshape(O, K)
    cdef double[:, ::1] cols = cols_arr
    cdef double[:, ::1] res = res_arr
    cdef double[:, ::1] wd = wd_arr
    cdef int g, c, kh, kw, oh, ow, ih, iw, row, o, p
    cdef double one = 1.0
    cdef char trans = b'N'
    for o in range(O):
        for p in range(P):
            res[o, p] = b[o]
    for g in range(groups):
        # im2col for this group: rows (c, kh, kw), columns (oh, ow)
        for c in range(Cg):
            for kh in range(KH):
                for kw in range(KW):
                    row = (c * KH + kh) * KW + kw
                    for oh in range(OH):
                        ih = oh * stride - pad + kh
                        if ih < 0 or ih >= H:
                            for ow in range(OW):
                                cols[row, oh * OW + ow] = 0.0
                            continue
                        for ow in range(OW):
                            iw = ow * stride - pad + kw
                            if iw < 0 or iw >= W:
                                cols[row, oh * OW + ow] = 0.0
                            else:
                                cols[row, oh * OW + ow] = x[g * Cg + c, ih, iw]
        # column-major view: res^T (P x Og) += cols^T (P x K) @ wd^T (K x Og)
        dgemm(&trans, &trans, &P, &Og, &K, &one, &cols[0, 0], &P,
              &wd[g * Og, 0], &K, &one, &res[g * Og, 0], &P)
    return res_arr.astype(np.float32).reshape(O, OH, OW)


def max_pool(const float[:, :, ::1] x, int size, int stride):
    cdef Py_ssize_t C = x.shape[0], H = x.shape[1], W = x.shape[2]
    cdef Py_ssize_t OH = (H - size) // stride + 1
    cdef Py_ssize_t OW = (W - size) // stride + 1
    out_arr = np.empty((C, OH, OW), dtype=np.float32)
    cdef float[:, :, ::1] out = out_arr
    cdef Py_ssize_t c, oh, ow, i, j
    cdef float m, v
    for c in range(C):
        for oh in range(OH):
            for ow in range(OW):
                m = x[c, oh * stride, ow * stride]
                for i in range(size):
                    for j in range(size):
                        v = x[c, oh * stride + i, ow * stride + j]
                        if v > m:
                            m = v
                out[c, oh, ow] = m
    return out_arr


def local_response_norm(const float[:, :, ::1] x, int depth, double alpha,
                        double beta, double k):
    cdef Py_ssize_t C = x.shape[0], H = x.shape[1], W = x.shape[2]
    cdef Py_ssize_t half = depth // 2
    acc_arr = np.zeros((C, H, W), dtype=np.float64)
    cdef double[:, :, ::1] acc = acc_arr
    cdef Py_ssize_t c, j, i, q, lo, hi
    cdef double a
    for c in range(C):
        lo = c - half if c >= half else 0
        hi = c + half if c + half < C else C - 1
        # whole planes at a time; channels summed in increasing order
        for j in range(lo, hi + 1):
            for i in range(H):
                for q in range(W):
                    a = x[j, i, q]
                    acc[c, i, q] += a * a
    # vectorised pow matches the fallback bit for bit
    return (np.asarray(x) / (k + alpha * acc_arr) ** beta).astype(np.float32)


def bilinear_sample(const double[:, ::1] img, const double[:, ::1] xs,
                    const double[:, ::1] ys, double fill):
    cdef Py_ssize_t H = img.shape[0], W = img.shape[1]
    cdef Py_ssize_t OH = xs.shape[0], OW = xs.shape[1]
    out_arr = np.empty((OH, OW), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j, x0, y0, x1, y1
    cdef double x, y, fx, fy, top, bot
    for i in range(OH):
        for j in range(OW):
            x = xs[i, j]
            y = ys[i, j]
            if not (x >= 0.0 and x <= W - 1 and y >= 0.0 and y <= H - 1):
                out[i, j] = fill
                continue
            x0 = <Py_ssize_t>floor(x)
            y0 = <Py_ssize_t>floor(y)
            x1 = x0 + 1 if x0 + 1 < W else W - 1
            y1 = y0 + 1 if y0 + 1 < H else H - 1
            fx = x - x0
            fy = y - y0
            # lerp form: exact on constant neighbourhoods
            top = img[y0, x0] + fx * (img[y0, x1] - img[y0, x0])
            bot = img[y1, x0] + fx * (img[y1, x1] - img[y1, x0])
            out[i, j] = top + fy * (bot - top)
    return out_arr
