"""Pure-numpy implementations of the convolution lowering kernels.

These are the fallback for the compiled extension in ``_kernels.pyx``; both
backends must produce bit-identical results (covered by the parity tests).
"""

import numpy as np


def im2col(x, kh, kw, stride):
    """Gather sliding kh x kw patches of an already-padded NCHW array.

    Returns a (N, C*kh*kw, H_out*W_out) array ready for a batched matmul
    against a (C_out, C*kh*kw) weight matrix.
    """
    n, c, h, w = x.shape
    ho = (h - kh) // stride + 1
    wo = (w - kw) // stride + 1
    windows = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(2, 3))
    windows = windows[:, :, ::stride, ::stride]
    cols = windows.transpose(0, 1, 4, 5, 2, 3).reshape(n, c * kh * kw, ho * wo)
    return np.ascontiguousarray(cols)


def col2im(cols, n, c, h, w, kh, kw, stride):
    """Scatter-add columns back onto a padded (n, c, h, w) canvas.

    Exact adjoint of :func:`im2col`; used for conv input gradients and the
    transposed-convolution forward pass.
    """
    ho = (h - kh) // stride + 1
    wo = (w - kw) // stride + 1
    out = np.zeros((n, c, h, w), dtype=cols.dtype)
    patches = cols.reshape(n, c, kh, kw, ho, wo)
    for i in range(kh):
        hi = i + stride * ho
        for j in range(kw):
            wj = j + stride * wo
            out[:, :, i:hi:stride, j:wj:stride] += patches[:, :, i, j]
    return out
