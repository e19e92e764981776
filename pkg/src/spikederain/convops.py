"""Convolution, pooling and time-axis tape operations.

Convolution uses cross-correlation semantics and is lowered to im2col plus a
batched matmul; the input gradient and the transposed convolution share the
col2im scatter kernel.  All ops are differentiable through ``from_op``.
"""

import numpy as np

from . import backend
from .autodiff import ShapeError, as_tensor, from_op, tensor_mean


def _pad_hw(x, padding):
    if padding == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))


def conv_out_hw(h, w, kh, kw, stride, padding):
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (w + 2 * padding - kw) // stride + 1
    return ho, wo


def conv2d(x, weight, bias=None, stride=1, padding=0):
    """2-D convolution of NCHW input with an (C_out, C_in, kh, kw) kernel."""
    x, weight = as_tensor(x), as_tensor(weight)
    if x.ndim != 4:
        raise ShapeError(f"conv2d: input must be 4-D NCHW, got shape {x.shape}")
    if weight.ndim != 4:
        raise ShapeError(f"conv2d: weight must be 4-D, got shape {weight.shape}")
    n, cin, h, w = x.shape
    cout, wcin, kh, kw = weight.shape
    if cin != wcin:
        raise ShapeError(
            f"conv2d: channel axis mismatch: input has {cin} channels, weight expects {wcin}"
        )
    if stride < 1:
        raise ShapeError(f"conv2d: stride must be >= 1, got {stride}")
    if h + 2 * padding < kh or w + 2 * padding < kw:
        raise ShapeError(
            f"conv2d: kernel {kh}x{kw} does not fit padded input {h + 2 * padding}x{w + 2 * padding}"
        )
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (cout,):
            raise ShapeError(f"conv2d: bias axis 0 must have {cout} entries, got {bias.shape}")

    ho, wo = conv_out_hw(h, w, kh, kw, stride, padding)
    xp = _pad_hw(x.data, padding)
    cols = backend.im2col(xp, kh, kw, stride)          # (n, cin*kh*kw, ho*wo)
    w2 = weight.data.reshape(cout, cin * kh * kw)
    out = np.matmul(w2, cols)                          # (n, cout, ho*wo)
    if bias is not None:
        out += bias.data[:, None]
    out = out.reshape(n, cout, ho, wo)

    def backward_fn(g):
        g2 = np.ascontiguousarray(g.reshape(n, cout, ho * wo))
        gx = gw = gb = None
        if x.requires_grad:
            gcols = np.matmul(w2.T, g2)
            gxp = backend.col2im(gcols, n, cin, h + 2 * padding, w + 2 * padding, kh, kw, stride)
            gx = gxp if padding == 0 else gxp[:, :, padding:padding + h, padding:padding + w]
        if weight.requires_grad:
            gw = np.matmul(g2, cols.transpose(0, 2, 1)).sum(axis=0).reshape(weight.shape)
        if bias is not None and bias.requires_grad:
            gb = g2.sum(axis=(0, 2))
        return (gx, gw) if bias is None else (gx, gw, gb)

    parents = (x, weight) if bias is None else (x, weight, bias)
    return from_op(out, parents, backward_fn)


def conv_transpose2d(x, weight, bias=None, stride=1, padding=0):
    """Transposed 2-D convolution (the adjoint map of ``conv2d``).

    ``weight`` has shape (C_in, C_out, kh, kw); output spatial size is
    (H-1)*stride + kh - 2*padding.  Used for learned stride-2 upsampling.
    """
    x, weight = as_tensor(x), as_tensor(weight)
    if x.ndim != 4:
        raise ShapeError(f"conv_transpose2d: input must be 4-D NCHW, got shape {x.shape}")
    n, cin, h, w = x.shape
    wcin, cout, kh, kw = weight.shape
    if cin != wcin:
        raise ShapeError(
            f"conv_transpose2d: channel axis mismatch: input has {cin} channels, weight expects {wcin}"
        )
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (cout,):
            raise ShapeError(
                f"conv_transpose2d: bias axis 0 must have {cout} entries, got {bias.shape}"
            )

    hp = (h - 1) * stride + kh
    wp = (w - 1) * stride + kw
    ho, wo = hp - 2 * padding, wp - 2 * padding
    w2 = weight.data.reshape(cin, cout * kh * kw)
    xr = x.data.reshape(n, cin, h * w)
    cols = np.matmul(w2.T, xr)                         # (n, cout*kh*kw, h*w)
    full = backend.col2im(cols, n, cout, hp, wp, kh, kw, stride)
    out = full if padding == 0 else full[:, :, padding:padding + ho, padding:padding + wo]
    out = np.ascontiguousarray(out)
    if bias is not None:
        out += bias.data[None, :, None, None]

    def backward_fn(g):
        gp = _pad_hw(g, padding)
        gcols = backend.im2col(np.ascontiguousarray(gp), kh, kw, stride)
        gx = gw = gb = None
        if x.requires_grad:
            gx = np.matmul(w2, gcols).reshape(x.shape)
        if weight.requires_grad:
            gw = np.matmul(xr, gcols.transpose(0, 2, 1)).sum(axis=0).reshape(weight.shape)
        if bias is not None and bias.requires_grad:
            gb = g.sum(axis=(0, 2, 3))
        return (gx, gw) if bias is None else (gx, gw, gb)

    parents = (x, weight) if bias is None else (x, weight, bias)
    return from_op(out, parents, backward_fn)


def global_avg_pool(x):
    """Mean over the spatial plane: (N, C, H, W) -> (N, C, 1, 1)."""
    x = as_tensor(x)
    if x.ndim != 4:
        raise ShapeError(f"global_avg_pool: input must be 4-D NCHW, got shape {x.shape}")
    return tensor_mean(x, axis=(2, 3), keepdims=True)


def time_mean(x):
    """Arithmetic mean over the leading time axis: (T, ...) -> (...)."""
    x = as_tensor(x)
    if x.ndim < 1 or x.shape[0] < 1:
        raise ShapeError(f"time_mean: need a nonempty leading time axis, got shape {x.shape}")
    return tensor_mean(x, axis=0)
