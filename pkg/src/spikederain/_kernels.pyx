# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled convolution-lowering kernels (im2col / col2im).

Patch gather and scatter-add dominate the runtime of training and inference;
everything else in the engine is BLAS matmuls or cheap elementwise numpy.
Semantics match spikederain._kernels_np exactly, element order included.
"""

import numpy as np

cimport cython

ctypedef fused floating:
    float
    double


cdef void _im2col_impl(const floating[:, :, :, ::1] x,
                       floating[:, :, ::1] cols,
                       Py_ssize_t kh, Py_ssize_t kw, Py_ssize_t stride,
                       Py_ssize_t ho, Py_ssize_t wo) noexcept nogil:
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1]
    cdef Py_ssize_t b, ch, i, j, oy, ox, row
    for b in range(n):
        for ch in range(c):
            for i in range(kh):
                for j in range(kw):
                    row = ((ch * kh) + i) * kw + j
                    for oy in range(ho):
                        for ox in range(wo):
                            cols[b, row, oy * wo + ox] = x[b, ch, oy * stride + i, ox * stride + j]


cdef void _col2im_impl(const floating[:, :, ::1] cols,
                       floating[:, :, :, ::1] out,
                       Py_ssize_t kh, Py_ssize_t kw, Py_ssize_t stride,
                       Py_ssize_t ho, Py_ssize_t wo) noexcept nogil:
    cdef Py_ssize_t n = out.shape[0], c = out.shape[1]
    cdef Py_ssize_t b, ch, i, j, oy, ox, row
    for b in range(n):
        for ch in range(c):
            for i in range(kh):
                for j in range(kw):
                    row = ((ch * kh) + i) * kw + j
                    for oy in range(ho):
                        for ox in range(wo):
                            out[b, ch, oy * stride + i, ox * stride + j] += cols[b, row, oy * wo + ox]


def im2col(x, Py_ssize_t kh, Py_ssize_t kw, Py_ssize_t stride):
    x = np.ascontiguousarray(x)
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t ho = (h - kh) // stride + 1
    cdef Py_ssize_t wo = (w - kw) // stride + 1
    cols = np.empty((n, c * kh * kw, ho * wo), dtype=x.dtype)
    if x.dtype == np.float32:
        _im2col_impl[float](x, cols, kh, kw, stride, ho, wo)
    elif x.dtype == np.float64:
        _im2col_impl[double](x, cols, kh, kw, stride, ho, wo)
    else:
        raise TypeError(f"im2col: unsupported dtype {x.dtype}")
    return cols


def col2im(cols, Py_ssize_t n, Py_ssize_t c, Py_ssize_t h, Py_ssize_t w,
           Py_ssize_t kh, Py_ssize_t kw, Py_ssize_t stride):
    cols = np.ascontiguousarray(cols)
    cdef Py_ssize_t ho = (h - kh) // stride + 1
    cdef Py_ssize_t wo = (w - kw) // stride + 1
    out = np.zeros((n, c, h, w), dtype=cols.dtype)
    if cols.dtype == np.float32:
        _col2im_impl[float](cols, out, kh, kw, stride, ho, wo)
    elif cols.dtype == np.float64:
        _col2im_impl[double](cols, out, kh, kw, stride, ho, wo)
    else:
        raise TypeError(f"col2im: unsupported dtype {cols.dtype}")
    return out
