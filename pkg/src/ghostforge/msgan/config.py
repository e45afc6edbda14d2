from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields

from ..validation import check_int, check_real


def _from_dict(cls, d):
    names = {f.name for f in fields(cls)}
    unknown = sorted(set(d) - names)
    if unknown:
        raise KeyError(f"unknown {cls.__name__} keys: {unknown}")
    kwargs = {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}
    return cls(**kwargs)


@dataclass(frozen=True)
class GeneratorConfig:
    base_channels: int = 16
    depth: int = 4
    mafe_branch_dilations: tuple = (1, 2, 3)
    attention_reduction: int = 4

    def __post_init__(self):
        check_int(self.depth, "depth", minimum=2)
        check_int(self.base_channels, "base_channels", minimum=4)
        check_int(self.attention_reduction, "attention_reduction", minimum=1)
        for d in self.mafe_branch_dilations:
            check_int(d, "dilation", minimum=1)
        for c in self.channels:
            if c % self.attention_reduction:
                raise ValueError(
                    f"attention_reduction {self.attention_reduction} does not divide {c} channels"
                )

    @property
    def channels(self):
        return [self.base_channels * 2**level for level in range(self.depth)]

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return _from_dict(cls, d)


@dataclass(frozen=True)
class DiscriminatorConfig:
    channels: tuple = (64, 128, 256, 1)
    width: float = 0.25
    strides: tuple = (2, 2, 2, 1)
    kernel: int = 4
    padding: int = 1
    slope: float = 0.2

    def __post_init__(self):
        if len(self.channels) != 4 or len(self.strides) != 4:
            raise ValueError("the discriminator has exactly four convolution layers")
        if self.kernel != 4:
            raise ValueError("discriminator kernels are 4x4")
        check_real(self.width, "width", minimum=0.0, strict=True)

    @property
    def widths(self):
        scaled = [max(1, int(round(c * self.width))) for c in self.channels[:-1]]
        return scaled + [self.channels[-1]]

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return _from_dict(cls, d)


@dataclass(frozen=True)
class LossWeights:
    alpha: float = 0.5
    beta: float = 0.01
    gamma: float = 0.01

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma"):
            check_real(getattr(self, name), name, minimum=0.0)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return _from_dict(cls, d)


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 1
    iterations: int = 1000
    lr_g: float = 2e-4
    lr_d: float = 2e-4
    betas: tuple = (0.5, 0.999)
    eps: float = 1e-8
    seed: int = 0
    checkpoint_every: int = 0
    perceptual_layers: tuple = (1, 2, 3)
    input_source: str = "degraded"

    def __post_init__(self):
        check_int(self.batch_size, "batch_size", minimum=1)
        check_int(self.iterations, "iterations", minimum=0)
        check_int(self.checkpoint_every, "checkpoint_every", minimum=0)
        check_real(self.lr_g, "lr_g", minimum=0.0)
        check_real(self.lr_d, "lr_d", minimum=0.0)
        if len(self.betas) != 2:
            raise ValueError("betas must hold two values")
        if not set(self.perceptual_layers) <= {1, 2, 3} or not self.perceptual_layers:
            raise ValueError(f"perceptual_layers must be a subset of (1, 2, 3), got {self.perceptual_layers}")
        if self.input_source not in ("degraded", "recon"):
            raise ValueError(f"input_source must be 'degraded' or 'recon', got {self.input_source!r}")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return _from_dict(cls, d)
