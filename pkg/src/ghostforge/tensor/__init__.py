from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .core import NonFiniteError, ShapeError, Tape, Tensor, no_grad, trace
from .gradcheck import grad_check, sample_indices
from .nn import Conv2d, Module, Parameter
from .ops import (
    add,
    concat_channels,
    conv2d,
    global_avg_pool,
    leaky_relu,
    maxpool2,
    mean,
    mean_square,
    mse,
    mul,
    relu,
    scale_channels,
    scale_spatial,
    sigmoid,
    softmax_over,
    sub,
    tanh,
    upsample_nearest,
)
from .optim import AdamState, MissingGradientError, adam_step

__all__ = [
    "AdamState", "CheckpointError", "Conv2d", "MissingGradientError", "Module",
    "NonFiniteError", "Parameter", "ShapeError", "Tape", "Tensor", "adam_step", "add",
    "concat_channels", "conv2d", "global_avg_pool", "grad_check", "leaky_relu",
    "load_checkpoint", "maxpool2", "mean", "mean_square", "mse", "mul", "no_grad",
    "relu", "sample_indices", "save_checkpoint", "scale_channels", "scale_spatial",
    "sigmoid", "softmax_over", "sub", "tanh", "trace", "upsample_nearest",
]
