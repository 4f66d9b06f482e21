"""Minimal dense numeric core: tape autodiff, layers, Adam, gradient checks."""

from .checkpoint import Checkpoint
from .gradcheck import GradCheckReport, gradcheck
from .layers import (
    LinearLayer,
    PReLU,
    collect_parameters,
    glorot_uniform,
    linear_forward,
    prelu_forward,
)
from .optim import Adam, AdamState, adam_step
from .tensor import (
    Tensor,
    add,
    add_const,
    concat_cols,
    constant,
    dropout,
    layer_norm,
    linear,
    log_softmax_rows,
    mean_stack,
    mul_const,
    multi_head_attention,
    no_grad,
    parameter,
    prelu,
    scale,
    softmax_cross_entropy,
    softmax_rows,
    sum_all,
)

__all__ = [
    "Adam",
    "AdamState",
    "Checkpoint",
    "GradCheckReport",
    "LinearLayer",
    "PReLU",
    "Tensor",
    "adam_step",
    "add",
    "add_const",
    "collect_parameters",
    "concat_cols",
    "constant",
    "dropout",
    "glorot_uniform",
    "gradcheck",
    "layer_norm",
    "linear",
    "linear_forward",
    "log_softmax_rows",
    "mean_stack",
    "mul_const",
    "multi_head_attention",
    "no_grad",
    "parameter",
    "prelu",
    "prelu_forward",
    "scale",
    "softmax_cross_entropy",
    "softmax_rows",
    "sum_all",
]
