"""Spiking encoder-decoder deraining network and its static layer graph.

The network: a 3x3 stem convolution, encoder stages of spiking residual
blocks with stride-2 spike-conv downsampling and channel doubling, mirrored
decoder stages with transposed-conv upsampling and additive skip
connections, time-mean decoding, a feature-refinement blend, a final 3x3
convolution, and a global input residual.  The final convolution is
zero-initialized so the untrained network is exactly the identity map.

``export_layer_graph`` rebuilds the same architecture as pure shape
arithmetic (no parameters allocated), which the energy profiler consumes and
the tests cross-check against the real module tree.
"""

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import ContractError, ShapeError
from .convops import time_mean
from .layers import AttentionGate, FeatureRefine, SpikeConvUnit, TdBatchNorm
from .modules import Conv2d, ConvTranspose2d, Module
from .neurons import LifConfig, direct_encode, lif_unroll


@dataclass
class NetworkConfig:
    time_steps: int = 4
    base_channels: int = 8
    stage_depths_enc: list = field(default_factory=lambda: [4, 4, 8])
    stage_depths_dec: list = field(default_factory=lambda: [2, 2])
    lif: LifConfig = field(default_factory=LifConfig)
    use_mau: bool = True
    use_tdbn: bool = True
    use_frb: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.time_steps < 1:
            raise ContractError(f"NetworkConfig: time_steps must be >= 1, got {self.time_steps}")
        if self.base_channels < 1:
            raise ContractError(f"NetworkConfig: base_channels must be >= 1, got {self.base_channels}")
        if not self.stage_depths_enc:
            raise ContractError("NetworkConfig: encoder stage depths must be nonempty")
        if len(self.stage_depths_dec) != len(self.stage_depths_enc) - 1:
            raise ContractError(
                "NetworkConfig: need one decoder stage per downsampling step "
                f"(got enc={self.stage_depths_enc}, dec={self.stage_depths_dec})"
            )

    @property
    def scale_factor(self):
        """Spatial divisibility the input must satisfy."""
        return 2 ** (len(self.stage_depths_enc) - 1)

    def norm_kwargs(self):
        if self.use_tdbn:
            return {"threshold_scale": self.lif.v_threshold, "time_pooled": True}
        return {"threshold_scale": 1.0, "time_pooled": False}

    def to_dict(self):
        return {
            "time_steps": self.time_steps,
            "base_channels": self.base_channels,
            "stage_depths_enc": list(self.stage_depths_enc),
            "stage_depths_dec": list(self.stage_depths_dec),
            "lif": {
                "tau": self.lif.tau,
                "v_threshold": self.lif.v_threshold,
                "v_reset": self.lif.v_reset,
                "beta": self.lif.beta,
                "alpha_surrogate": self.lif.alpha_surrogate,
            },
            "use_mau": self.use_mau,
            "use_tdbn": self.use_tdbn,
            "use_frb": self.use_frb,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "lif" in d:
            d["lif"] = LifConfig(**d["lif"])
        return cls(**d)


class SpikeUpsampleUnit(Module):
    """LIF conversion, stride-2 transposed convolution, threshold norm."""

    def __init__(self, rng, lif_cfg, in_ch, out_ch, norm_kwargs=None):
        self.lif_cfg = lif_cfg
        self.conv = ConvTranspose2d(rng, in_ch, out_ch, kernel=2, stride=2)
        self.norm = TdBatchNorm(out_ch, **(norm_kwargs or {}))

    def __call__(self, x_seq, training=True):
        spikes = lif_unroll(x_seq, self.lif_cfg)
        t, n = spikes.shape[0], spikes.shape[1]
        merged = ad.reshape(spikes, (t * n,) + spikes.shape[2:])
        feats = self.conv(merged)
        return self.norm(ad.reshape(feats, (t, n) + feats.shape[1:]), training=training)


class SpikeResidualBlock(Module):
    """Two stacked spike-conv units plus a parallel conv shortcut branch,
    attention-gated and wrapped in an identity residual."""

    def __init__(self, rng, lif_cfg, channels, use_mau=True, norm_kwargs=None):
        self.scu1 = SpikeConvUnit(rng, lif_cfg, channels, channels, norm_kwargs=norm_kwargs)
        self.scu2 = SpikeConvUnit(rng, lif_cfg, channels, channels, norm_kwargs=norm_kwargs)
        self.branch_conv = Conv2d(rng, channels, channels, kernel=3)
        self.branch_norm = TdBatchNorm(channels, **(norm_kwargs or {}))
        self.gate = AttentionGate(rng, channels) if use_mau else None

    def __call__(self, x_seq, training=True):
        spiked = self.scu2(self.scu1(x_seq, training=training), training=training)
        t, n = x_seq.shape[0], x_seq.shape[1]
        merged = ad.reshape(x_seq, (t * n,) + x_seq.shape[2:])
        shortcut = self.branch_norm(
            ad.reshape(self.branch_conv(merged), (t, n) + x_seq.shape[2:]), training=training
        )
        fused = spiked + shortcut
        if self.gate is not None:
            fused = self.gate(fused, training=training)
        return fused + x_seq


class SpikingDerainNet(Module):
    def __init__(self, cfg: NetworkConfig):
        self.cfg = cfg
        rng = np.random.default_rng(cfg.seed)
        nk = cfg.norm_kwargs()
        c0 = cfg.base_channels
        n_stages = len(cfg.stage_depths_enc)
        widths = [c0 * 2**i for i in range(n_stages)]

        self.stem = Conv2d(rng, 3, c0, kernel=3)
        self.encoder = [
            [
                SpikeResidualBlock(rng, cfg.lif, widths[i], use_mau=cfg.use_mau, norm_kwargs=nk)
                for _ in range(depth)
            ]
            for i, depth in enumerate(cfg.stage_depths_enc)
        ]
        self.downsamples = [
            SpikeConvUnit(rng, cfg.lif, widths[i], widths[i + 1], stride=2, norm_kwargs=nk)
            for i in range(n_stages - 1)
        ]
        self.upsamples = [
            SpikeUpsampleUnit(rng, cfg.lif, widths[n_stages - 1 - j], widths[n_stages - 2 - j], norm_kwargs=nk)
            for j in range(len(cfg.stage_depths_dec))
        ]
        self.decoder = [
            [
                SpikeResidualBlock(
                    rng, cfg.lif, widths[n_stages - 2 - j], use_mau=cfg.use_mau, norm_kwargs=nk
                )
                for _ in range(depth)
            ]
            for j, depth in enumerate(cfg.stage_depths_dec)
        ]
        self.refine = FeatureRefine(rng, c0) if cfg.use_frb else None
        self.final = Conv2d(rng, c0, 3, kernel=3, zero_init=True)

    def __call__(self, x, training=True):
        x = ad.as_tensor(x)
        if x.ndim != 4 or x.shape[1] != 3:
            raise ShapeError(f"network: expected (N,3,H,W) input, got shape {x.shape}")
        f = self.cfg.scale_factor
        _, _, h, w = x.shape
        if h % f or w % f:
            raise ContractError(
                f"network: input height/width must be divisible by {f}, got {h}x{w}"
            )
        # The stem is algebraically shared across time steps (the encoded
        # copies are identical), so it runs once on the static image.
        seq = direct_encode(self.stem(x), self.cfg.time_steps)
        skips = []
        for i, stage in enumerate(self.encoder):
            for block in stage:
                seq = block(seq, training=training)
            if i < len(self.encoder) - 1:
                skips.append(seq)
                seq = self.downsamples[i](seq, training=training)
        for j, stage in enumerate(self.decoder):
            seq = self.upsamples[j](seq, training=training)
            seq = seq + skips[-(j + 1)]
            for block in stage:
                seq = block(seq, training=training)
        feat = time_mean(seq)
        if self.refine is not None:
            feat = self.refine(feat, training=training)
        return self.final(feat) + x


def build_network(cfg):
    return SpikingDerainNet(cfg)


# -- static layer graph --------------------------------------------------


@dataclass
class LayerDescriptor:
    name: str
    kind: str            # conv | lif | tdbn | mau | frb | pool | upsample | add
    in_shape: tuple      # (C, H, W) for one time step, batch 1
    out_shape: tuple
    kernel: int | None
    stride: int
    params: int
    macs: int            # multiply-accumulates of one ANN-equivalent pass
    spiking_input: bool  # priced as synaptic operations when True
    lif_sites: int = 0   # spike-generation sites per time step (kind lif)


@dataclass
class LayerGraph:
    descriptors: list
    time_steps: int
    input_hw: tuple

    def total_params(self):
        return sum(d.params for d in self.descriptors)

    def total_macs(self):
        return sum(d.macs for d in self.descriptors)


def _conv_desc(name, cin, cout, k, stride, h, w, spiking, kind="conv"):
    if kind == "upsample":
        ho, wo = h * stride, w * stride
        macs = cin * cout * k * k * h * w
    else:
        ho, wo = h // stride, w // stride
        macs = cin * cout * k * k * ho * wo
    return LayerDescriptor(
        name=name, kind=kind, in_shape=(cin, h, w), out_shape=(cout, ho, wo),
        kernel=k, stride=stride, params=cout * cin * k * k + cout, macs=macs,
        spiking_input=spiking,
    )


def _lif_desc(name, c, h, w):
    return LayerDescriptor(
        name=name, kind="lif", in_shape=(c, h, w), out_shape=(c, h, w), kernel=None,
        stride=1, params=0, macs=0, spiking_input=False, lif_sites=c * h * w,
    )


def _tdbn_desc(name, c, h, w):
    return LayerDescriptor(
        name=name, kind="tdbn", in_shape=(c, h, w), out_shape=(c, h, w), kernel=None,
        stride=1, params=2 * c, macs=0, spiking_input=False,
    )


def _add_desc(name, c, h, w):
    return LayerDescriptor(
        name=name, kind="add", in_shape=(c, h, w), out_shape=(c, h, w), kernel=None,
        stride=1, params=0, macs=0, spiking_input=False,
    )


def mau_macs(c, h, w, reduction=4):
    hidden = max(c // reduction, 1)
    return c * hidden + hidden * c + 7 * 7 * h * w


def mau_params(c, reduction=4):
    hidden = max(c // reduction, 1)
    return (hidden * c + hidden) + (c * hidden + c) + (7 * 7 + 1)


def frb_macs(c, h, w, reduction=4):
    hidden = max(c // reduction, 1)
    return c * hidden + hidden * c + 3 * (c * c * 3 * 3 * h * w)


def frb_params(c, reduction=4):
    hidden = max(c // reduction, 1)
    return (hidden * c + hidden) + (c * hidden + c) + 3 * (c * c * 3 * 3 + c)


def _scu_descs(name, cin, cout, stride, h, w):
    ho, wo = h // stride, w // stride
    return [
        _lif_desc(f"{name}.lif", cin, h, w),
        _conv_desc(f"{name}.conv", cin, cout, 3, stride, h, w, spiking=True),
        _tdbn_desc(f"{name}.norm", cout, ho, wo),
    ], (cout, ho, wo)


def _srb_descs(name, c, h, w, use_mau):
    descs = []
    for unit in ("scu1", "scu2"):
        got, _ = _scu_descs(f"{name}.{unit}", c, c, 1, h, w)
        descs.extend(got)
    descs.append(_conv_desc(f"{name}.branch_conv", c, c, 3, 1, h, w, spiking=True))
    descs.append(_tdbn_desc(f"{name}.branch_norm", c, h, w))
    descs.append(_add_desc(f"{name}.fuse", c, h, w))
    if use_mau:
        descs.append(
            LayerDescriptor(
                name=f"{name}.gate", kind="mau", in_shape=(c, h, w), out_shape=(c, h, w),
                kernel=None, stride=1, params=mau_params(c), macs=mau_macs(c, h, w),
                spiking_input=True,
            )
        )
    descs.append(_add_desc(f"{name}.residual", c, h, w))
    return descs


def export_layer_graph(cfg: NetworkConfig, input_hw):
    """Describe every executed layer of the configured network at the given
    input size, with MAC counts derived purely from shapes."""
    h, w = input_hw
    f = cfg.scale_factor
    if h % f or w % f:
        raise ContractError(f"export_layer_graph: input {h}x{w} not divisible by {f}")
    c0 = cfg.base_channels
    n_stages = len(cfg.stage_depths_enc)
    widths = [c0 * 2**i for i in range(n_stages)]
    descs = [_conv_desc("stem", 3, c0, 3, 1, h, w, spiking=False)]

    hh, ww = h, w
    for i, depth in enumerate(cfg.stage_depths_enc):
        c = widths[i]
        for b in range(depth):
            descs.extend(_srb_descs(f"enc{i}.srb{b}", c, hh, ww, cfg.use_mau))
        if i < n_stages - 1:
            got, (_, hh, ww) = _scu_descs(f"down{i}", c, widths[i + 1], 2, hh, ww)
            descs.extend(got)

    for j, depth in enumerate(cfg.stage_depths_dec):
        cin, cout = widths[n_stages - 1 - j], widths[n_stages - 2 - j]
        descs.append(_lif_desc(f"up{j}.lif", cin, hh, ww))
        descs.append(_conv_desc(f"up{j}.conv", cin, cout, 2, 2, hh, ww, spiking=True, kind="upsample"))
        hh, ww = hh * 2, ww * 2
        descs.append(_tdbn_desc(f"up{j}.norm", cout, hh, ww))
        descs.append(_add_desc(f"up{j}.skip", cout, hh, ww))
        for b in range(depth):
            descs.extend(_srb_descs(f"dec{j}.srb{b}", cout, hh, ww, cfg.use_mau))

    descs.append(
        LayerDescriptor(
            name="time_mean", kind="pool", in_shape=(c0, hh, ww), out_shape=(c0, hh, ww),
            kernel=None, stride=1, params=0, macs=0, spiking_input=False,
        )
    )
    if cfg.use_frb:
        descs.append(
            LayerDescriptor(
                name="refine", kind="frb", in_shape=(c0, hh, ww), out_shape=(c0, hh, ww),
                kernel=None, stride=1, params=frb_params(c0), macs=frb_macs(c0, hh, ww),
                spiking_input=False,
            )
        )
    descs.append(_conv_desc("final", c0, 3, 3, 1, hh, ww, spiking=False))
    descs.append(_add_desc("global_residual", 3, hh, ww))
    return LayerGraph(descriptors=descs, time_steps=cfg.time_steps, input_hw=(h, w))
