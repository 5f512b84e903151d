# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled twins of the kernels in ``kernels_np``.

Same layout conventions, bit-identical results; plain loops that the C
compiler vectorizes, parallelized over the batch dimension.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

ctypedef fused floating:
    float
    double


def im2col(floating[:, :, :, ::1] xpad, int kh, int kw):
    cdef Py_ssize_t B = xpad.shape[0]
    cdef Py_ssize_t Hp = xpad.shape[1]
    cdef Py_ssize_t Wp = xpad.shape[2]
    cdef Py_ssize_t C = xpad.shape[3]
    cdef Py_ssize_t Ho = Hp - kh + 1
    cdef Py_ssize_t Wo = Wp - kw + 1
    cdef Py_ssize_t row = kw * C

    if floating is float:
        dtype = np.float32
    else:
        dtype = np.float64
    cols_arr = np.empty((B, Ho * Wo, kh * row), dtype=dtype)
    cdef floating[:, :, ::1] cols = cols_arr

    cdef Py_ssize_t b, i, j, di, t, p
    cdef const floating* src
    cdef floating* dst
    with nogil:
        for b in range(B):
            for i in range(Ho):
                for j in range(Wo):
                    p = i * Wo + j
                    for di in range(kh):
                        # one patch row is contiguous in the source image
                        src = &xpad[b, i + di, j, 0]
                        dst = &cols[b, p, di * row]
                        for t in range(row):
                            dst[t] = src[t]
    return cols_arr


def col2im_add(floating[:, :, ::1] cols, Py_ssize_t Hp, Py_ssize_t Wp,
               Py_ssize_t C, int kh, int kw):
    cdef Py_ssize_t B = cols.shape[0]
    cdef Py_ssize_t Ho = Hp - kh + 1
    cdef Py_ssize_t Wo = Wp - kw + 1
    cdef Py_ssize_t row = kw * C

    if floating is float:
        dtype = np.float32
    else:
        dtype = np.float64
    xpad_arr = np.zeros((B, Hp, Wp, C), dtype=dtype)
    cdef floating[:, :, :, ::1] xpad = xpad_arr

    cdef Py_ssize_t b, i, j, di, t, p
    cdef const floating* src
    cdef floating* dst
    with nogil:
        for b in range(B):
            for i in range(Ho):
                for j in range(Wo):
                    p = i * Wo + j
                    for di in range(kh):
                        src = &cols[b, p, di * row]
                        dst = &xpad[b, i + di, j, 0]
                        for t in range(row):
                            dst[t] += src[t]
    return xpad_arr


def maxpool2_forward(floating[:, :, :, ::1] x):
    cdef Py_ssize_t B = x.shape[0]
    cdef Py_ssize_t H = x.shape[1]
    cdef Py_ssize_t W = x.shape[2]
    cdef Py_ssize_t C = x.shape[3]
    cdef Py_ssize_t H2 = H // 2
    cdef Py_ssize_t W2 = W // 2

    if floating is float:
        dtype = np.float32
    else:
        dtype = np.float64
    out_arr = np.empty((B, H2, W2, C), dtype=dtype)
    idx_arr = np.empty((B, H2, W2, C), dtype=np.uint8)
    cdef floating[:, :, :, ::1] out = out_arr
    cdef unsigned char[:, :, :, ::1] idx = idx_arr

    cdef Py_ssize_t b, i, j, c, di, dj, k
    cdef floating best, v
    cdef unsigned char kbest
    with nogil:
        for b in range(B):
            for i in range(H2):
                for j in range(W2):
                    for c in range(C):
                        best = x[b, 2 * i, 2 * j, c]
                        kbest = 0
                        for k in range(1, 4):
                            di = k >> 1
                            dj = k & 1
                            v = x[b, 2 * i + di, 2 * j + dj, c]
                            if v > best:
                                best = v
                                kbest = <unsigned char> k
                        out[b, i, j, c] = best
                        idx[b, i, j, c] = kbest
    return out_arr, idx_arr


def maxpool2_backward(floating[:, :, :, ::1] g, unsigned char[:, :, :, ::1] idx):
    cdef Py_ssize_t B = g.shape[0]
    cdef Py_ssize_t H2 = g.shape[1]
    cdef Py_ssize_t W2 = g.shape[2]
    cdef Py_ssize_t C = g.shape[3]

    if floating is float:
        dtype = np.float32
    else:
        dtype = np.float64
    gx_arr = np.zeros((B, H2 * 2, W2 * 2, C), dtype=dtype)
    cdef floating[:, :, :, ::1] gx = gx_arr

    cdef Py_ssize_t b, i, j, c
    cdef unsigned char k
    with nogil:
        for b in range(B):
            for i in range(H2):
                for j in range(W2):
                    for c in range(C):
                        k = idx[b, i, j, c]
                        gx[b, 2 * i + (k >> 1), 2 * j + (k & 1), c] = g[b, i, j, c]
    return gx_arr
