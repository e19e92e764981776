"""Dense tensors with reverse-mode automatic differentiation on numpy.

A ``Tensor`` wraps an ndarray and, when gradients are enabled, remembers the
operation that produced it.  ``backward`` on a scalar walks the recorded
operations in exact reverse order of creation and accumulates gradients into
every leaf tensor that has ``requires_grad`` set.

Only singleton-axis broadcasting is supported: operand shapes are aligned on
the right and every aligned extent must match or be 1.  That keeps the
gradient reduction rule (sum over the expanded axes) trivially correct.
"""

from __future__ import annotations

import contextlib
import itertools

import numpy as np


class ShapeError(ValueError):
    """Operand shapes are incompatible; the message names the offending axis."""


class ContractError(ValueError):
    """An operation was called outside its documented contract."""


_DEFAULT_DTYPE = np.float32
_GRAD_ENABLED = True
_NODE_COUNTER = itertools.count()


def set_default_dtype(dtype):
    """Select the session precision (fp32 for speed, fp64 for gradient checks)."""
    global _DEFAULT_DTYPE
    dtype = np.dtype(dtype)
    if dtype not in (np.float32, np.float64):
        raise ContractError(f"unsupported dtype {dtype}; use float32 or float64")
    _DEFAULT_DTYPE = dtype.type


def default_dtype():
    return _DEFAULT_DTYPE


@contextlib.contextmanager
def precision(dtype):
    """Temporarily switch the session dtype (used by the fp64 test modes)."""
    old = _DEFAULT_DTYPE
    set_default_dtype(dtype)
    try:
        yield
    finally:
        set_default_dtype(old)


@contextlib.contextmanager
def no_grad():
    """Disable tape recording inside the block (inference / statistics)."""
    global _GRAD_ENABLED
    old = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = old


def grad_enabled():
    return _GRAD_ENABLED


class Tensor:
    """An n-dimensional array that can participate in the gradient tape.

    4-D data is laid out batch x channel x height x width; time-resolved data
    prepends a leading time axis.  ``grad`` is allocated lazily and accumulates
    across repeated ``backward`` calls until ``zero_grad``.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_node_id")

    def __init__(self, data, requires_grad=False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.asarray(data, dtype=dtype or _DEFAULT_DTYPE)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None
        self._node_id = next(_NODE_COUNTER)

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    def item(self):
        return float(self.data.reshape(()))

    def numpy(self):
        return self.data

    def detach(self):
        """A view of the same values with no tape participation."""
        return Tensor(self.data, requires_grad=False, dtype=self.data.dtype)

    def zero_grad(self):
        self.grad = None

    def accumulate_grad(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self):
        backward(self)

    # -- operator sugar ------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    def sum(self, axis=None, keepdims=False):
        return tensor_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tensor_mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        return reshape(self, *shape)


def as_tensor(x, dtype=None):
    return x if isinstance(x, Tensor) else Tensor(x, dtype=dtype)


def parameter(data, dtype=None):
    """A leaf tensor registered for gradient accumulation."""
    return Tensor(np.asarray(data, dtype=dtype or _DEFAULT_DTYPE), requires_grad=True)


def from_op(data, parents, backward_fn):
    """Record a custom operation on the tape.

    ``backward_fn(g)`` must return one gradient array (or None) per parent,
    each already reduced to the parent's shape.  This is the hook used by the
    convolution lowering and the spike nonlinearity's surrogate gradient.
    """
    out = Tensor(data, dtype=data.dtype if isinstance(data, np.ndarray) else None)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def backward(loss):
    """Accumulate d(loss)/d(leaf) into every reachable leaf's ``grad``.

    Visits nodes in exact reverse creation order, which is a valid reverse
    topological order because operands always precede their results.  A loss
    with no recorded history is a no-op.
    """
    if loss.data.size != 1:
        raise ContractError(f"backward: loss must be a scalar, got shape {loss.shape}")
    if loss._backward is None:
        if loss.requires_grad:
            loss.accumulate_grad(np.ones_like(loss.data))
        return

    nodes = {}
    stack = [loss]
    while stack:
        t = stack.pop()
        if id(t) in nodes:
            continue
        nodes[id(t)] = t
        stack.extend(p for p in t._parents if p.requires_grad)

    pending = {id(loss): np.ones_like(loss.data)}
    for node in sorted(nodes.values(), key=lambda t: t._node_id, reverse=True):
        g = pending.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node.accumulate_grad(g)
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            acc = pending.get(id(parent))
            if acc is None:
                pending[id(parent)] = pg.copy() if pg.base is not None or pg is g else pg
            else:
                acc += pg


# -- broadcasting helpers ----------------------------------------------


def broadcast_shape(sa, sb, opname="elementwise"):
    """Singleton-axis broadcast result shape; raises ShapeError otherwise."""
    out = []
    ra, rb = len(sa), len(sb)
    for i in range(max(ra, rb)):
        a = sa[ra - 1 - i] if i < ra else 1
        b = sb[rb - 1 - i] if i < rb else 1
        if a != b and a != 1 and b != 1:
            axis = max(ra, rb) - 1 - i
            raise ShapeError(
                f"{opname}: axis {axis} has extents {a} and {b}; "
                f"shapes {tuple(sa)} and {tuple(sb)} only broadcast over singleton axes"
            )
        out.append(max(a, b))
    return tuple(reversed(out))


def reduce_to_shape(g, shape):
    """Sum gradient over axes that were broadcast, back to ``shape``."""
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _binary(a, b, opname, fwd, back_a, back_b):
    a, b = as_tensor(a), as_tensor(b)
    broadcast_shape(a.shape, b.shape, opname)
    data = fwd(a.data, b.data)

    def backward_fn(g):
        ga = reduce_to_shape(back_a(g, a.data, b.data), a.shape) if a.requires_grad else None
        gb = reduce_to_shape(back_b(g, a.data, b.data), b.shape) if b.requires_grad else None
        return ga, gb

    return from_op(data, (a, b), backward_fn)


# -- elementwise operations --------------------------------------------


def add(a, b):
    return _binary(a, b, "add", lambda x, y: x + y, lambda g, x, y: g, lambda g, x, y: g)


def sub(a, b):
    return _binary(a, b, "sub", lambda x, y: x - y, lambda g, x, y: g, lambda g, x, y: -g)


def mul(a, b):
    return _binary(a, b, "mul", lambda x, y: x * y, lambda g, x, y: g * y, lambda g, x, y: g * x)


def div(a, b):
    return _binary(
        a, b, "div",
        lambda x, y: x / y,
        lambda g, x, y: g / y,
        lambda g, x, y: -g * x / (y * y),
    )


def scale(a, s):
    """Multiply by a compile-time scalar."""
    a = as_tensor(a)
    s = a.data.dtype.type(s)
    return from_op(a.data * s, (a,), lambda g: (g * s,))


def add_scalar(a, s):
    a = as_tensor(a)
    s = a.data.dtype.type(s)
    return from_op(a.data + s, (a,), lambda g: (g,))


def one_minus(a):
    """1 - a, the gate complement."""
    a = as_tensor(a)
    one = a.data.dtype.type(1)
    return from_op(one - a.data, (a,), lambda g: (-g,))


def sigmoid(a):
    a = as_tensor(a)
    y = 1.0 / (1.0 + np.exp(-a.data))
    return from_op(y, (a,), lambda g: (g * y * (1.0 - y),))


def relu(a):
    a = as_tensor(a)
    y = np.maximum(a.data, 0)
    return from_op(y, (a,), lambda g: (g * (a.data > 0),))


def sqrt(a):
    a = as_tensor(a)
    y = np.sqrt(a.data)
    return from_op(y, (a,), lambda g: (g * (0.5 / y),))


# -- reductions and shape ops ------------------------------------------


def _normalize_axes(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def tensor_sum(a, axis=None, keepdims=False):
    a = as_tensor(a)
    axes = _normalize_axes(axis, a.ndim)
    data = a.data.sum(axis=axes, keepdims=keepdims)

    def backward_fn(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, a.shape),)

    return from_op(data, (a,), backward_fn)


def tensor_mean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    axes = _normalize_axes(axis, a.ndim)
    count = 1
    for ax in axes:
        count *= a.shape[ax]
    data = a.data.mean(axis=axes, keepdims=keepdims)
    inv = a.data.dtype.type(1.0 / count)

    def backward_fn(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g * inv, a.shape),)

    return from_op(data, (a,), backward_fn)


def reshape(a, *shape):
    a = as_tensor(a)
    if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
        shape = tuple(shape[0])
    data = a.data.reshape(shape)
    return from_op(data, (a,), lambda g: (g.reshape(a.shape),))


def stack(tensors, axis=0):
    """Stack tensors along a new axis (used to assemble time sequences)."""
    tensors = [as_tensor(t) for t in tensors]
    base = tensors[0].shape
    for i, t in enumerate(tensors):
        if t.shape != base:
            raise ShapeError(f"stack: element {i} has shape {t.shape}, expected {base}")
    data = np.stack([t.data for t in tensors], axis=axis)

    def backward_fn(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    return from_op(data, tensors, backward_fn)


def index_axis0(a, i):
    """Select slice ``a[i]``; gradient scatters back into a zero tensor."""
    a = as_tensor(a)
    data = a.data[i]

    def backward_fn(g):
        full = np.zeros(a.shape, dtype=g.dtype)
        full[i] = g
        return (full,)

    return from_op(data, (a,), backward_fn)


def repeat_axis0(a, n):
    """Fan ``a`` out to ``n`` identical leading slices; gradient sums them."""
    a = as_tensor(a)
    data = np.ascontiguousarray(np.broadcast_to(a.data, (n,) + a.shape))
    return from_op(data, (a,), lambda g: (g.sum(axis=0),))


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def backward_fn(g):
        return tuple(
            np.take(g, range(bounds[i], bounds[i + 1]), axis=axis)
            for i in range(len(tensors))
        )

    return from_op(data, tensors, backward_fn)
