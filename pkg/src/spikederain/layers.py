"""Network layers: threshold-scaled batch norm, spike convolution unit,
attention gating of spike responses, and the gated feature-refinement blend.

All layers take time-major 5-D sequences (T, N, C, H, W) except
``FeatureRefine``, which runs after time-mean decoding on 4-D maps.
"""

import numpy as np

from . import autodiff as ad
from .autodiff import ShapeError, Tensor, parameter
from .convops import conv2d, global_avg_pool, time_mean
from .modules import Conv2d, Module, he_normal
from .neurons import lif_unroll


class TdBatchNorm(Module):
    """Per-channel normalization pooled jointly over (T, N, H, W).

    The normalized output is scaled by the firing threshold so that
    pre-activations land on a scale the spiking neurons can discriminate:
    y = threshold_scale * gamma * (x - mean) / sqrt(var + eps) + beta_shift.
    With ``time_pooled=False`` statistics are computed per time step instead,
    which is the plain-BN ablation variant.
    """

    def __init__(self, channels, threshold_scale=1.0, eps=1e-5, momentum=0.1, time_pooled=True):
        self.channels = channels
        self.threshold_scale = threshold_scale
        self.eps = eps
        self.momentum = momentum
        self.time_pooled = time_pooled
        dt = ad.default_dtype()
        self.gamma = parameter(np.ones(channels, dtype=dt))
        self.beta_shift = parameter(np.zeros(channels, dtype=dt))
        self.running_mean = Tensor(np.zeros(channels, dtype=dt))
        self.running_var = Tensor(np.ones(channels, dtype=dt))

    def __call__(self, x_seq, training=True):
        if x_seq.ndim != 5:
            raise ShapeError(f"tdbn: expected 5-D (T,N,C,H,W) input, got shape {x_seq.shape}")
        if x_seq.shape[2] != self.channels:
            raise ShapeError(
                f"tdbn: channel axis has {x_seq.shape[2]} channels, layer expects {self.channels}"
            )
        axes = (0, 1, 3, 4) if self.time_pooled else (1, 3, 4)
        if training:
            mean = ad.tensor_mean(x_seq, axis=axes, keepdims=True)
            centered = x_seq - mean
            var = ad.tensor_mean(centered * centered, axis=axes, keepdims=True)
            self._update_running(x_seq.data)
        else:
            shape = (1, 1, self.channels, 1, 1)
            mean = Tensor(self.running_mean.data.reshape(shape))
            var = Tensor(self.running_var.data.reshape(shape))
            centered = x_seq - mean
        xhat = centered / ad.sqrt(ad.add_scalar(var, self.eps))
        shape = (1, 1, self.channels, 1, 1)
        weight = ad.scale(self.gamma, self.threshold_scale).reshape(shape)
        return xhat * weight + self.beta_shift.reshape(shape)

    def _update_running(self, data):
        mean = data.mean(axis=(0, 1, 3, 4))
        var = data.var(axis=(0, 1, 3, 4))
        m = self.momentum
        self.running_mean.data = (1 - m) * self.running_mean.data + m * mean.astype(data.dtype)
        self.running_var.data = (1 - m) * self.running_var.data + m * var.astype(data.dtype)


def _merge_time(x_seq):
    t, n = x_seq.shape[0], x_seq.shape[1]
    return ad.reshape(x_seq, (t * n,) + x_seq.shape[2:]), t, n


def _split_time(x, t, n):
    return ad.reshape(x, (t, n) + x.shape[1:])


class SpikeConvUnit(Module):
    """LIF conversion, then convolution, then threshold batch norm.

    The convolution only ever sees the binary spike sequence; stride 2 makes
    this the downsampling unit between encoder stages.
    """

    def __init__(self, rng, lif_cfg, in_ch, out_ch, kernel=3, stride=1, norm_kwargs=None):
        self.lif_cfg = lif_cfg
        self.conv = Conv2d(rng, in_ch, out_ch, kernel, stride=stride)
        self.norm = TdBatchNorm(out_ch, **(norm_kwargs or {}))

    def __call__(self, x_seq, training=True):
        spikes = lif_unroll(x_seq, self.lif_cfg)
        merged, t, n = _merge_time(spikes)
        feats = self.conv(merged)
        return self.norm(_split_time(feats, t, n), training=training)

    def spike_activity(self, x_seq):
        """Forward only to the spike map; used for sparsity measurement."""
        return lif_unroll(x_seq, self.lif_cfg)


class AttentionGate(Module):
    """Channel and spatial sigmoid gates shared across time steps.

    The gates are computed from the time-mean feature map: a squeezed
    two-layer channel gate on the pooled vector and a single wide-kernel
    spatial gate on the channel-mean map.  Output is x[t] * c * s per step,
    so gating never amplifies and stays fully differentiable.
    """

    def __init__(self, rng, channels, reduction=4, spatial_kernel=7):
        hidden = max(channels // reduction, 1)
        self.channels = channels
        self.squeeze = Conv2d(rng, channels, hidden, kernel=1)
        self.excite = Conv2d(rng, hidden, channels, kernel=1)
        self.spatial = Conv2d(rng, 1, 1, kernel=spatial_kernel)

    def __call__(self, x_seq, training=True):
        pooled = time_mean(x_seq)                                  # (N,C,H,W)
        c = ad.sigmoid(self.excite(ad.relu(self.squeeze(global_avg_pool(pooled)))))
        plane = ad.tensor_mean(pooled, axis=1, keepdims=True)      # (N,1,H,W)
        s = ad.sigmoid(self.spatial(plane))
        n = x_seq.shape[1]
        c5 = c.reshape((1, n, self.channels, 1, 1))
        s5 = s.reshape((1, n, 1) + s.shape[2:])
        return x_seq * c5 * s5


class FeatureRefine(Module):
    """Gated blend of a feature map with its globally pooled summary.

    Two sigmoid branches: a global one from the pooled vector and a local
    one from stacked convolutions; the output interpolates per element
    between the input and the global summary:
    out = y * f_local + (1 - f_local) * f_global.
    """

    def __init__(self, rng, channels, reduction=4):
        hidden = max(channels // reduction, 1)
        self.channels = channels
        self.pool_squeeze = Conv2d(rng, channels, hidden, kernel=1)
        self.pool_excite = Conv2d(rng, hidden, channels, kernel=1)
        self.local_a = Conv2d(rng, channels, channels, kernel=3)
        self.local_b = Conv2d(rng, channels, channels, kernel=3)
        self.local_c = Conv2d(rng, channels, channels, kernel=3)

    def __call__(self, y, training=True):
        if y.ndim != 4:
            raise ShapeError(f"frb: expected 4-D (N,C,H,W) input, got shape {y.shape}")
        if y.shape[1] != self.channels:
            raise ShapeError(
                f"frb: channel axis has {y.shape[1]} channels, layer expects {self.channels}"
            )
        f_global = ad.sigmoid(self.pool_excite(ad.relu(self.pool_squeeze(global_avg_pool(y)))))
        f_local = ad.sigmoid(self.local_c(ad.relu(self.local_b(self.local_a(y)))))
        return y * f_local + ad.one_minus(f_local) * f_global
