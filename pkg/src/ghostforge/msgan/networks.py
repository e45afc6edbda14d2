"""Generator, discriminator and frozen feature extractor."""

from __future__ import annotations

from ..tensor import ops
from ..tensor.core import ShapeError
from ..tensor.nn import Conv2d, Module
from .config import DiscriminatorConfig, GeneratorConfig

FUSION_LEVELS = 4


class MAFE(Module):
    """Multi-scale attention feature extraction.

    Parallel dilated 3x3 branches are concatenated and merged back to the
    input width by a 1x1 convolution; squeeze-excitation gains then rescale
    the merged channels, and the unit input is added back.
    """

    def __init__(self, channels, dilations=(1, 2, 3), reduction=4):
        self.branches = [Conv2d(channels, channels, 3, dilation=d, padding=d) for d in dilations]
        self.merge = Conv2d(channels * len(dilations), channels, 1)
        self.squeeze = Conv2d(channels, channels // reduction, 1)
        self.excite = Conv2d(channels // reduction, channels, 1)

    def attention(self, feats):
        z = ops.global_avg_pool(feats)
        return ops.sigmoid(self.excite(ops.relu(self.squeeze(z))))

    def forward(self, x):
        multi = ops.concat_channels([ops.relu(branch(x)) for branch in self.branches])
        merged = self.merge(multi)
        return ops.add(ops.scale_channels(merged, self.attention(merged)), x)


class DynamicFusion(Module):
    """Per-pixel softmax-weighted sum of decoder levels brought to one size."""

    def __init__(self, level_channels, out_channels):
        self.n_levels = len(level_channels)
        self.align = [Conv2d(c, out_channels, 1) for c in level_channels]
        self.score = [Conv2d(out_channels, 1, 1) for _ in level_channels]

    def weights(self, aligned):
        return ops.softmax_over([score(f) for score, f in zip(self.score, aligned)])

    def upsampled(self, levels):
        if len(levels) != self.n_levels:
            raise ValueError(f"fusion expects {self.n_levels} levels, got {len(levels)}")
        size = levels[-1].shape[2]
        out = []
        for align, level in zip(self.align, levels):
            factor, rem = divmod(size, level.shape[2])
            if rem or level.shape[2] > size:
                raise ShapeError(f"level of size {level.shape[2]} does not tile {size}")
            # 1x1 conv commutes with nearest upsampling; convolve at low resolution
            out.append(ops.upsample_nearest(align(level), factor))
        return out

    def forward(self, levels):
        aligned = self.upsampled(levels)
        omega = self.weights(aligned)
        fused = ops.scale_spatial(aligned[0], omega[0])
        for f, w in zip(aligned[1:], omega[1:]):
            fused = ops.add(fused, ops.scale_spatial(f, w))
        return fused


class Generator(Module):
    """U-Net with MAFE units, dynamic fusion and a global input skip."""

    def __init__(self, cfg=GeneratorConfig()):
        self.cfg = cfg
        ch = cfg.channels
        dil, red = cfg.mafe_branch_dilations, cfg.attention_reduction
        self.enc_conv = [Conv2d(1 if i == 0 else ch[i - 1], ch[i], 3, padding=1) for i in range(cfg.depth)]
        self.enc_mafe = [MAFE(c, dil, red) for c in ch]
        self.bottleneck = MAFE(ch[-1], dil, red)
        self.dec_conv = [
            Conv2d((ch[i + 1] if i + 1 < cfg.depth else ch[-1]) + ch[i], ch[i], 3, padding=1)
            for i in range(cfg.depth)
        ]
        n_fuse = min(FUSION_LEVELS, cfg.depth)
        self.fusion = DynamicFusion(ch[:n_fuse][::-1], cfg.base_channels)
        self.head = Conv2d(cfg.base_channels, 1, 1)

    def check_input(self, x):
        if x.ndim != 4 or x.shape[1] != 1:
            raise ShapeError(f"generator input must be (batch, 1, S, S), got {x.shape}")
        step = 2**self.cfg.depth
        if x.shape[2] % step or x.shape[3] % step:
            raise ShapeError(f"input size {x.shape[2:]} is not divisible by 2^depth = {step}")

    def decoder_levels(self, x):
        self.check_input(x)
        h, skips = x, []
        for conv, mafe in zip(self.enc_conv, self.enc_mafe):
            h = mafe(ops.relu(conv(h)))
            skips.append(h)
            h = ops.maxpool2(h)
        h = self.bottleneck(h)
        levels = []
        for i in reversed(range(self.cfg.depth)):
            h = ops.concat_channels([ops.upsample_nearest(h, 2), skips[i]])
            h = ops.relu(self.dec_conv[i](h))
            levels.append(h)
        return levels[-self.fusion.n_levels:]

    def forward(self, x):
        fused = self.fusion(self.decoder_levels(x))
        return ops.sigmoid(ops.add(self.head(fused), x))


class PatchDiscriminator(Module):
    """Four 4x4 convolutions emitting a map of per-patch scores (no squashing)."""

    def __init__(self, cfg=DiscriminatorConfig()):
        self.cfg = cfg
        widths = cfg.widths
        ins = [1] + widths[:-1]
        self.layers = [
            Conv2d(i, o, cfg.kernel, stride=s, padding=cfg.padding)
            for i, o, s in zip(ins, widths, cfg.strides)
        ]

    def receptive_field(self):
        rf, jump = 1, 1
        for layer in self.layers:
            rf += (self.cfg.kernel - 1) * jump
            jump *= layer.stride
        return rf

    def forward(self, img):
        if img.ndim != 4 or img.shape[1] != 1:
            raise ShapeError(f"discriminator input must be (batch, 1, S, S), got {img.shape}")
        h = img
        for i, layer in enumerate(self.layers):
            h = layer(h)
            if i < len(self.layers) - 1:
                h = ops.leaky_relu(h, self.cfg.slope)
        return h


class PerceptualExtractor(Module):
    """Frozen random 3-block conv stack; taps are the three block outputs."""

    def __init__(self, seed=0, channels=(8, 16, 32)):
        ins = (1,) + tuple(channels[:-1])
        self.blocks = [
            Conv2d(i, o, 3, stride=1 if k == 0 else 2, padding=1)
            for k, (i, o) in enumerate(zip(ins, channels))
        ]
        self.reset_parameters(seed, namespace="perceptual")
        for p in self.parameters():
            p.requires_grad = False

    def forward(self, x):
        taps, h = [], x
        for block in self.blocks:
            h = ops.relu(block(h))
            taps.append(h)
        return taps
