"""Numeric gradient checking against central finite differences.

The checker only re-evaluates the forward function; it never touches the
tape, so it is an independent oracle for the recorded gradients.  Run it
under fp64 (``autodiff.precision("float64")``) — at fp32 the difference
quotient drowns in rounding noise.
"""

import numpy as np

from .autodiff import backward


def finite_difference_grad(f, tensors, eps=1e-6):
    """Central-difference gradient of scalar ``f()`` w.r.t. each tensor.

    ``f`` must read the current ``.data`` of the given tensors on every call.
    Returns one array per tensor, perturbing every coordinate.
    """
    grads = []
    for t in tensors:
        flat = t.data.reshape(-1)
        g = np.zeros_like(flat)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = float(f().data)
            flat[i] = orig - eps
            lo = float(f().data)
            flat[i] = orig
            g[i] = (hi - lo) / (2.0 * eps)
        grads.append(g.reshape(t.shape))
    return grads


def max_relative_error(analytic, numeric):
    """max_i |a_i - n_i| / max(1, |a|_inf, |n|_inf), a scale-aware rel error."""
    a = np.asarray(analytic).reshape(-1)
    n = np.asarray(numeric).reshape(-1)
    scale = max(1.0, float(np.abs(a).max(initial=0.0)), float(np.abs(n).max(initial=0.0)))
    return float(np.abs(a - n).max(initial=0.0)) / scale


def check_gradients(f, tensors, eps=1e-6, rtol=1e-5):
    """Assert tape gradients of scalar ``f()`` match finite differences.

    Returns the worst relative error over all checked tensors.
    """
    for t in tensors:
        t.zero_grad()
    loss = f()
    backward(loss)
    numeric = finite_difference_grad(f, tensors, eps=eps)
    worst = 0.0
    for t, num in zip(tensors, numeric):
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        err = max_relative_error(analytic, num)
        worst = max(worst, err)
        if err > rtol:
            raise AssertionError(
                f"gradient mismatch: relative error {err:.3e} > {rtol:.1e} "
                f"for tensor of shape {t.shape}"
            )
    return worst
