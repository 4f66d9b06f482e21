"""Channel-fusion blocks: transform-average-concatenate and the
selected-channel variant, plus channel average pooling.

The standard block maps each channel through a shared transform, averages
the transformed channels, and concatenates the average back onto every
channel before a residual projection; it is equivariant under channel
permutation.  The modified block additionally runs the selected channel
through the shared input transform, concatenates it into every channel's
projection (breaking the permutation symmetry toward the selected
channel), and gives the selected channel its own residual head.
"""

from dataclasses import dataclass

import numpy as np

from .errors import EmptyInputError, ShapeError
from .ndcore import LinearLayer, PReLU, Tensor, add, concat_cols, constant, mean_stack


@dataclass
class MultichannelBatch:
    """Aligned per-channel features plus the selected channel."""

    channels: list
    selected: object = None
    selected_index: int = -1

    def __post_init__(self):
        if not self.channels:
            raise EmptyInputError("MultichannelBatch needs at least one channel")
        shapes = {tuple(np.asarray(_data(c)).shape) for c in self.channels}
        if len(shapes) != 1:
            raise ShapeError(f"channel shapes differ: {sorted(shapes)}")
        if self.selected is not None:
            if tuple(np.asarray(_data(self.selected)).shape) not in shapes:
                raise ShapeError("selected channel shape differs from the regular channels")


def _data(x):
    return x.data if isinstance(x, Tensor) else x


def _as_tensor(x):
    return x if isinstance(x, Tensor) else constant(np.asarray(x))


class Transform:
    """Linear map followed by PReLU: the P/Q/R/S unit."""

    def __init__(self, in_dim, out_dim, rng=None, dtype=np.float32, init="glorot"):
        self.lin = LinearLayer(in_dim, out_dim, rng=rng, dtype=dtype, init=init)
        self.act = PReLU(out_dim, dtype=dtype)

    def __call__(self, x):
        return self.act(self.lin(x))

    def parameters(self):
        return {"weight": self.lin.weight, "bias": self.lin.bias, "slope": self.act.slope}


class TacBlock:
    """Standard block: h_i = P(z_i); avg = Q(mean_i h_i); out_i = z_i + R([h_i; avg])."""

    def __init__(self, feat_dim, hidden, rng=None, dtype=np.float32, init="glorot"):
        self.feat_dim = feat_dim
        self.hidden = hidden
        self.P = Transform(feat_dim, hidden, rng, dtype, init)
        self.Q = Transform(hidden, hidden, rng, dtype, init)
        self.R = Transform(2 * hidden, feat_dim, rng, dtype, init)

    def parameters(self):
        return {"P": self.P, "Q": self.Q, "R": self.R}

    def __call__(self, channels):
        channels = _check_channels(channels, self.feat_dim)
        hs = [self.P(z) for z in channels]
        avg = self.Q(mean_stack(hs))
        return [add(z, self.R(concat_cols([h, avg]))) for z, h in zip(channels, hs)]


class ModTacBlock:
    """Selected-channel block: the average still runs over the regular
    channels only, every projection also sees P(selected), and the
    selected channel gets its own head S."""

    def __init__(self, feat_dim, hidden, rng=None, dtype=np.float32, init="glorot"):
        self.feat_dim = feat_dim
        self.hidden = hidden
        self.P = Transform(feat_dim, hidden, rng, dtype, init)
        self.Q = Transform(hidden, hidden, rng, dtype, init)
        self.R = Transform(3 * hidden, feat_dim, rng, dtype, init)
        self.S = Transform(hidden, feat_dim, rng, dtype, init)

    def parameters(self):
        return {"P": self.P, "Q": self.Q, "R": self.R, "S": self.S}

    def __call__(self, channels, selected):
        channels = _check_channels(channels, self.feat_dim)
        selected = _as_tensor(selected)
        if selected.data.shape != channels[0].data.shape:
            raise ShapeError(
                f"selected channel shape {selected.data.shape} != {channels[0].data.shape}")
        hs = [self.P(z) for z in channels]
        h_sc = self.P(selected)
        avg = self.Q(mean_stack(hs))
        outs = [add(z, self.R(concat_cols([h, avg, h_sc]))) for z, h in zip(channels, hs)]
        out_sc = add(selected, self.S(h_sc))
        return outs, out_sc


def _check_channels(channels, feat_dim):
    if isinstance(channels, MultichannelBatch):
        channels = channels.channels
    if not channels:
        raise EmptyInputError("no channels")
    channels = [_as_tensor(z) for z in channels]
    shape = channels[0].data.shape
    for z in channels:
        if z.data.ndim != 2:
            raise ShapeError("each channel must be a T x F matrix")
        if z.data.shape != shape:
            raise ShapeError(f"channel shape {z.data.shape} != {shape}")
    if channels[0].data.shape[1] != feat_dim:
        raise ShapeError(f"feature dim {channels[0].data.shape[1]} != block dim {feat_dim}")
    return channels


def tac_forward(block, channels):
    """Functional wrapper returning plain arrays."""
    return [t.data for t in block([_as_tensor(z) for z in channels])]


def modtac_forward(block, channels, selected):
    outs, out_sc = block([_as_tensor(z) for z in channels], _as_tensor(selected))
    return [t.data for t in outs], out_sc.data


def channel_average_pool(channels):
    """Arithmetic mean over the channel axis of a list of T x F tensors."""
    if isinstance(channels, np.ndarray):
        if channels.ndim != 3:
            raise ShapeError("expected channels x T x F array")
        channels = list(channels)
    if not channels:
        raise EmptyInputError("channel_average_pool: no channels")
    tensors = [_as_tensor(z) for z in channels]
    return mean_stack(tensors)
