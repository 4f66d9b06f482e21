"""Dense layers used by both wake-word models."""

import numpy as np

from ..errors import ShapeError
from .tensor import Tensor, linear, parameter, prelu


def glorot_uniform(rng, out_dim, in_dim, dtype):
    """Uniform init in +-sqrt(6/(in+out))."""
    bound = np.sqrt(6.0 / (in_dim + out_dim))
    return rng.uniform(-bound, bound, size=(out_dim, in_dim)).astype(dtype)


class LinearLayer:
    """Affine map y = x W^T + b."""

    def __init__(self, in_dim, out_dim, rng=None, dtype=np.float32, init="glorot"):
        self.in_dim = in_dim
        self.out_dim = out_dim
        if init == "zeros" or rng is None:
            w = np.zeros((out_dim, in_dim), dtype=dtype)
        else:
            w = glorot_uniform(rng, out_dim, in_dim, dtype)
        self.weight = parameter(w, name="weight")
        self.bias = parameter(np.zeros(out_dim, dtype=dtype), name="bias")

    def __call__(self, x):
        return linear(x, self.weight, self.bias)

    def parameters(self):
        return {"weight": self.weight, "bias": self.bias}


class PReLU:
    """Per-unit parametric rectifier: x for x >= 0, slope * x otherwise."""

    def __init__(self, dim, init_slope=0.25, dtype=np.float32):
        self.dim = dim
        self.slope = parameter(np.full(dim, init_slope, dtype=dtype), name="slope")

    def __call__(self, x):
        return prelu(x, self.slope)

    def parameters(self):
        return {"slope": self.slope}


def linear_forward(layer, x):
    """Array-level forward of a LinearLayer on a rows x in_dim matrix."""
    x = np.asarray(x)
    if x.ndim != 2 or x.shape[1] != layer.in_dim:
        raise ShapeError(f"expected (*, {layer.in_dim}) input, got {x.shape}")
    return x @ layer.weight.data.T + layer.bias.data


def prelu_forward(act, x):
    """Array-level forward of a PReLU on a rows x dim matrix."""
    x = np.asarray(x)
    if x.shape[-1] != act.dim:
        raise ShapeError(f"expected feature dim {act.dim}, got {x.shape[-1]}")
    return np.maximum(x, 0) + act.slope.data * np.minimum(x, 0)


def collect_parameters(prefix, obj):
    """Flatten nested {name: Tensor | submodule} structures into dot names."""
    out = {}
    params = obj.parameters() if hasattr(obj, "parameters") else obj
    for key, val in params.items():
        name = f"{prefix}.{key}" if prefix else key
        if isinstance(val, Tensor):
            out[name] = val
        else:
            out.update(collect_parameters(name, val))
    return out
