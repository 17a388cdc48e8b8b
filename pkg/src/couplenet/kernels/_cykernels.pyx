# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled pooling kernels; semantics mirror python_backend exactly.

Max pooling breaks ties toward the first pixel in row-major bin order,
matching numpy argmax. Average pooling accumulates in a single f64
accumulator per bin.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def roi_max_pool(double[:, :, ::1] img, long[:, ::1] hs, long[:, ::1] he,
                 long[:, ::1] ws, long[:, ::1] we):
    cdef Py_ssize_t c = img.shape[0], h = img.shape[1], w = img.shape[2]
    cdef Py_ssize_t oh = hs.shape[0], ow = hs.shape[1]
    pooled_arr = np.zeros((c, oh, ow))
    argmax_arr = np.full((c, oh, ow), -1, dtype=np.int64)
    cdef double[:, :, ::1] pooled = pooled_arr
    cdef long[:, :, ::1] argmax = argmax_arr
    cdef Py_ssize_t i, j, ch, y, x, y0, y1, x0, x1, best_idx
    cdef double best, v
    for i in range(oh):
        for j in range(ow):
            y0 = hs[i, j]; y1 = he[i, j]; x0 = ws[i, j]; x1 = we[i, j]
            if y0 >= y1 or x0 >= x1:
                continue
            for ch in range(c):
                best = img[ch, y0, x0]
                best_idx = y0 * w + x0
                for y in range(y0, y1):
                    for x in range(x0, x1):
                        v = img[ch, y, x]
                        if v > best:
                            best = v
                            best_idx = y * w + x
                pooled[ch, i, j] = best
                argmax[ch, i, j] = best_idx
    return pooled_arr, argmax_arr


def roi_max_unpool(long[:, :, ::1] argmax, double[:, :, ::1] grad_out,
                   Py_ssize_t h, Py_ssize_t w):
    cdef Py_ssize_t c = argmax.shape[0], oh = argmax.shape[1], ow = argmax.shape[2]
    grad_arr = np.zeros((c, h, w))
    cdef double[:, :, ::1] grad = grad_arr
    cdef Py_ssize_t ch, i, j
    cdef long idx
    for ch in range(c):
        for i in range(oh):
            for j in range(ow):
                idx = argmax[ch, i, j]
                if idx >= 0:
                    grad[ch, idx // w, idx % w] += grad_out[ch, i, j]
    return grad_arr


def psroi_avg_pool(double[:, :, ::1] maps, Py_ssize_t k, Py_ssize_t nc,
                   long[:, ::1] hs, long[:, ::1] he,
                   long[:, ::1] ws, long[:, ::1] we):
    values_arr = np.zeros((nc, k, k))
    counts_arr = np.zeros((k, k), dtype=np.int64)
    cdef double[:, :, ::1] values = values_arr
    cdef long[:, ::1] counts = counts_arr
    cdef Py_ssize_t i, j, c, ch, y, x, y0, y1, x0, x1
    cdef long n
    cdef double acc
    for i in range(k):
        for j in range(k):
            y0 = hs[i, j]; y1 = he[i, j]; x0 = ws[i, j]; x1 = we[i, j]
            if y0 >= y1 or x0 >= x1:
                continue
            n = (y1 - y0) * (x1 - x0)
            counts[i, j] = n
            for c in range(nc):
                ch = c * k * k + i * k + j
                acc = 0.0
                for y in range(y0, y1):
                    for x in range(x0, x1):
                        acc += maps[ch, y, x]
                values[c, i, j] = acc / n
    return values_arr, counts_arr


def psroi_avg_unpool(double[:, :, ::1] grad_out, Py_ssize_t k, Py_ssize_t nc,
                     long[:, ::1] hs, long[:, ::1] he,
                     long[:, ::1] ws, long[:, ::1] we,
                     long[:, ::1] counts, Py_ssize_t h, Py_ssize_t w):
    grad_arr = np.zeros((nc * k * k, h, w))
    cdef double[:, :, ::1] grad = grad_arr
    cdef Py_ssize_t i, j, c, ch, y, x, y0, y1, x0, x1
    cdef long n
    cdef double g
    for i in range(k):
        for j in range(k):
            n = counts[i, j]
            if n == 0:
                continue
            y0 = hs[i, j]; y1 = he[i, j]; x0 = ws[i, j]; x1 = we[i, j]
            for c in range(nc):
                ch = c * k * k + i * k + j
                g = grad_out[c, i, j] / n
                for y in range(y0, y1):
                    for x in range(x0, x1):
                        grad[ch, y, x] += g
    return grad_arr
