"""Leaky integrate-and-fire dynamics with a sigmoid surrogate gradient.

The membrane update per time step is

    h = u_prev + (1/tau) * (x - (u_prev - v_reset))
    s = step(h - v_threshold)            # 1 when h >= v_threshold
    u = beta * h * (1 - s) + v_reset * s

with u carried across steps and reset to ``v_reset`` between independent
forward passes.  The step function keeps its binary forward value; its
backward pass substitutes the scaled sigmoid derivative
``alpha * sig(alpha*x) * (1 - sig(alpha*x))``.

For finite-difference checks the forward step can be replaced by the
surrogate sigmoid itself (``smooth_spikes`` context) so the whole network
becomes differentiable end to end.
"""

import contextlib
from dataclasses import dataclass, field

import numpy as np

from .autodiff import (
    ContractError,
    ShapeError,
    Tensor,
    add_scalar,
    as_tensor,
    from_op,
    index_axis0,
    mul,
    one_minus,
    repeat_axis0,
    scale,
    stack,
)

_SMOOTH_SPIKES = False


@contextlib.contextmanager
def smooth_spikes():
    """Replace the binary step by its surrogate sigmoid (test mode only)."""
    global _SMOOTH_SPIKES
    old = _SMOOTH_SPIKES
    _SMOOTH_SPIKES = True
    try:
        yield
    finally:
        _SMOOTH_SPIKES = old


def smooth_mode():
    return _SMOOTH_SPIKES


@dataclass
class LifConfig:
    """Neuron constants; defaults follow direct-training SNN convention."""

    tau: float = 2.0
    v_threshold: float = 1.0
    v_reset: float = 0.0
    beta: float = 0.5
    alpha_surrogate: float = 4.0

    def __post_init__(self):
        if self.tau <= 0:
            raise ContractError(f"LifConfig: tau must be > 0, got {self.tau}")
        if self.alpha_surrogate <= 0:
            raise ContractError(f"LifConfig: alpha_surrogate must be > 0, got {self.alpha_surrogate}")
        if not 0.0 <= self.beta <= 1.0:
            raise ContractError(f"LifConfig: beta must lie in [0, 1], got {self.beta}")
        if self.v_threshold <= self.v_reset:
            raise ContractError(
                f"LifConfig: v_threshold ({self.v_threshold}) must exceed v_reset ({self.v_reset})"
            )


@dataclass
class NeuronState:
    """Post-reset membrane potential carried to the next time step."""

    u: Tensor

    @classmethod
    def initial(cls, shape, cfg, dtype=None):
        data = np.full(shape, cfg.v_reset, dtype=dtype or np.dtype("float32"))
        return cls(u=Tensor(data, dtype=data.dtype))


def surrogate_grad(x, alpha):
    """alpha * sig(alpha x) * (1 - sig(alpha x)); peaks at alpha/4 for x = 0."""
    if alpha <= 0:
        raise ContractError(f"surrogate_grad: alpha must be > 0, got {alpha}")
    x = np.asarray(x.data if isinstance(x, Tensor) else x)
    sig = 1.0 / (1.0 + np.exp(-alpha * x))
    return alpha * sig * (1.0 - sig)


def spike_fn(v, alpha):
    """Heaviside step of the centered potential, with surrogate backward.

    Forward emits exactly 0/1 (step(0) = 1).  In ``smooth_spikes`` mode the
    forward is the surrogate sigmoid itself, making the map differentiable
    for finite-difference oracles.
    """
    v = as_tensor(v)
    alpha = float(alpha)
    if _SMOOTH_SPIKES:
        sig = 1.0 / (1.0 + np.exp(-alpha * v.data))
        out = sig
    else:
        out = (v.data >= 0).astype(v.data.dtype)
        sig = None

    def backward_fn(g):
        s = sig if sig is not None else 1.0 / (1.0 + np.exp(-alpha * v.data))
        return (g * (alpha * s * (1.0 - s)),)

    return from_op(out, (v,), backward_fn)


def direct_encode(image, t_steps):
    """Copy a static image to every time step: (N,C,H,W) -> (T,N,C,H,W)."""
    if t_steps < 1:
        raise ContractError(f"direct_encode: need at least 1 time step, got {t_steps}")
    return repeat_axis0(as_tensor(image), t_steps)


def lif_step(x, state, cfg):
    """One membrane update; returns the binary spike map and the new state."""
    x = as_tensor(x)
    if x.shape != state.u.shape:
        raise ShapeError(
            f"lif_step: input shape {x.shape} does not match state shape {state.u.shape}"
        )
    u = state.u
    leak = add_scalar(u, -cfg.v_reset)                 # u - v_reset
    h = u + scale(x - leak, 1.0 / cfg.tau)
    s = spike_fn(add_scalar(h, -cfg.v_threshold), cfg.alpha_surrogate)
    u_next = mul(scale(h, cfg.beta), one_minus(s)) + scale(s, cfg.v_reset)
    return s, NeuronState(u=u_next)


def lif_unroll(x_seq, cfg):
    """Run lif_step across the leading time axis from a fresh state.

    Input (T, N, C, H, W); returns the stacked spike sequence of the same
    shape.  State starts at v_reset and is not shared between calls.
    """
    x_seq = as_tensor(x_seq)
    if x_seq.ndim < 2 or x_seq.shape[0] < 1:
        raise ShapeError(f"lif_unroll: need a nonempty leading time axis, got shape {x_seq.shape}")
    t_steps = x_seq.shape[0]
    state = NeuronState.initial(x_seq.shape[1:], cfg, dtype=x_seq.data.dtype)
    spikes = []
    for t in range(t_steps):
        s, state = lif_step(index_axis0(x_seq, t), state, cfg)
        spikes.append(s)
    return stack(spikes, axis=0)


def spike_rate(spike_seq):
    """Mean spike activity (fraction of ones) of a spike sequence."""
    data = spike_seq.data if isinstance(spike_seq, Tensor) else np.asarray(spike_seq)
    return float(data.mean())
