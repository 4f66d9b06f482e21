"""Reverse-mode autodiff over a recorded operation tape.

A ``Tensor`` wraps a C-contiguous numpy array (row-major, so a 2-D tensor
is exactly the rows x cols matrix the rest of the package works with) and
remembers which operation produced it.  Calling ``backward()`` on a scalar
result walks the recorded graph in reverse topological order and
accumulates gradients into every tensor with ``requires_grad=True``.

Only the operations the wake-word models need are provided; each op
computes its forward value eagerly with numpy and registers a closure for
its vector-Jacobian product.  Fused ops (attention, layer norm, losses)
live next to the simple ones so the whole graph stays small.

Training runs in float32; gradient verification requires float64
(see ``gradcheck``).
"""

import math
from contextlib import contextmanager

import numpy as np

from ..errors import EmptyInputError, ShapeError, StateError

_grad_enabled = True


@contextmanager
def no_grad():
    """Disable tape recording inside the block (inference fast path)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    """Array node in the autodiff graph."""

    __slots__ = ("data", "grad", "requires_grad", "parents", "backward_fn", "name")

    def __init__(self, data, requires_grad=False, parents=(), backward_fn=None, name=None):
        self.data = data if isinstance(data, np.ndarray) else np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self.parents = tuple(parents)
        self.backward_fn = backward_fn
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self):
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def backward(self, grad=None):
        """Accumulate gradients of this value into the recorded graph.

        Raises StateError when called on a tensor that no recorded
        operation produced (there is nothing to differentiate through).
        """
        if self.backward_fn is None:
            raise StateError("backward() called on a tensor with no recorded forward op")
        if grad is None:
            if self.data.size != 1:
                raise ShapeError("backward() without an explicit gradient needs a scalar")
            grad = np.ones_like(self.data)
        else:
            grad = np.asarray(grad, dtype=self.data.dtype)
            if grad.shape != self.data.shape:
                raise ShapeError(f"gradient shape {grad.shape} != value shape {self.data.shape}")

        topo = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node.parents:
                if id(p) not in seen and p.backward_fn is not None:
                    stack.append((p, False))

        self.grad = grad if self.grad is None else self.grad + grad
        for node in reversed(topo):
            if node.backward_fn is not None and node.grad is not None:
                node.backward_fn(node.grad)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"


def parameter(data, name=None):
    """Leaf tensor that collects gradients."""
    arr = np.ascontiguousarray(data)
    return Tensor(arr, requires_grad=True, name=name)


def constant(data):
    arr = data if isinstance(data, np.ndarray) else np.asarray(data)
    return Tensor(arr, requires_grad=False)


def _accum(t, g):
    if t.grad is None:
        t.grad = g.copy() if isinstance(g, np.ndarray) else g
    else:
        t.grad = t.grad + g


def _make(data, parents, backward_fn):
    if _grad_enabled and any(p.requires_grad or p.backward_fn is not None for p in parents):
        return Tensor(data, requires_grad=True, parents=parents, backward_fn=backward_fn)
    return Tensor(data, requires_grad=False)


def _check_finite(arr, what):
    if not np.all(np.isfinite(arr)):
        raise ShapeError(f"{what} contains non-finite values")


# ---------------------------------------------------------------------------
# elementwise / structural ops


def add(a, b):
    """Same-shape elementwise sum (residual connections)."""
    if a.data.shape != b.data.shape:
        raise ShapeError(f"add: {a.data.shape} vs {b.data.shape}")
    out_data = a.data + b.data

    def bwd(g):
        if a.requires_grad or a.backward_fn is not None:
            _accum(a, g)
        if b.requires_grad or b.backward_fn is not None:
            _accum(b, g)

    return _make(out_data, (a, b), bwd)


def scale(a, c):
    """Multiply by a python scalar."""
    c = float(c)
    out_data = a.data * c

    def bwd(g):
        _accum(a, g * c)

    return _make(out_data, (a,), bwd)


def mul_const(a, const):
    """Elementwise product with a fixed (non-learnable) array."""
    const = np.asarray(const, dtype=a.data.dtype)
    if const.shape != a.data.shape:
        raise ShapeError(f"mul_const: {a.data.shape} vs {const.shape}")
    out_data = a.data * const

    def bwd(g):
        _accum(a, g * const)

    return _make(out_data, (a,), bwd)


def add_const(a, const):
    """Elementwise sum with a fixed array (positional encodings)."""
    const = np.asarray(const, dtype=a.data.dtype)
    out_data = a.data + const

    def bwd(g):
        _accum(a, g)

    return _make(out_data, (a,), bwd)


def sum_all(a):
    out_data = np.asarray(a.data.sum(), dtype=a.data.dtype)

    def bwd(g):
        _accum(a, np.broadcast_to(g, a.data.shape) * np.ones_like(a.data))

    return _make(out_data, (a,), bwd)


def concat_cols(parts):
    """Concatenate 2-D tensors along the feature (last) axis."""
    if not parts:
        raise EmptyInputError("concat_cols: empty list")
    rows = parts[0].data.shape[0]
    for p in parts:
        if p.data.ndim != 2 or p.data.shape[0] != rows:
            raise ShapeError("concat_cols: all parts need matching row counts")
    out_data = np.concatenate([p.data for p in parts], axis=1)
    widths = [p.data.shape[1] for p in parts]
    offsets = np.cumsum([0] + widths)

    def bwd(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            if p.requires_grad or p.backward_fn is not None:
                _accum(p, g[:, lo:hi])

    return _make(out_data, tuple(parts), bwd)


def mean_stack(parts):
    """Arithmetic mean of same-shape tensors (channel pooling)."""
    if not parts:
        raise EmptyInputError("mean_stack: empty list")
    shape = parts[0].data.shape
    for p in parts:
        if p.data.shape != shape:
            raise ShapeError("mean_stack: shape mismatch")
    n = len(parts)
    out_data = parts[0].data.copy()
    for p in parts[1:]:
        out_data += p.data
    out_data /= n

    def bwd(g):
        share = g / n
        for p in parts:
            if p.requires_grad or p.backward_fn is not None:
                _accum(p, share)

    return _make(out_data, tuple(parts), bwd)


# ---------------------------------------------------------------------------
# layers


def linear(x, weight, bias):
    """y = x @ W^T + b for x (T, in), W (out, in), b (out,)."""
    if x.data.ndim != 2 or weight.data.ndim != 2:
        raise ShapeError("linear: x and weight must be 2-D")
    if x.data.shape[1] != weight.data.shape[1]:
        raise ShapeError(
            f"linear: input dim {x.data.shape[1]} != weight in-dim {weight.data.shape[1]}")
    if bias.data.shape != (weight.data.shape[0],):
        raise ShapeError("linear: bias shape mismatch")
    out_data = x.data @ weight.data.T + bias.data

    def bwd(g):
        if weight.requires_grad or weight.backward_fn is not None:
            _accum(weight, g.T @ x.data)
        if bias.requires_grad or bias.backward_fn is not None:
            _accum(bias, g.sum(axis=0))
        if x.requires_grad or x.backward_fn is not None:
            _accum(x, g @ weight.data)

    return _make(out_data, (x, weight, bias), bwd)


def prelu(x, slope):
    """max(x, 0) + slope * min(x, 0) with one learnable slope per column."""
    if slope.data.shape != (x.data.shape[-1],):
        raise ShapeError(
            f"prelu: slope length {slope.data.shape} != feature dim {x.data.shape[-1]}")
    neg = np.minimum(x.data, 0)
    out_data = np.maximum(x.data, 0) + slope.data * neg

    def bwd(g):
        if x.requires_grad or x.backward_fn is not None:
            dx = np.where(x.data >= 0, g, g * slope.data)
            _accum(x, dx)
        if slope.requires_grad or slope.backward_fn is not None:
            ds = (g * neg).reshape(-1, x.data.shape[-1]).sum(axis=0)
            _accum(slope, ds)

    return _make(out_data, (x, slope), bwd)


def layer_norm(x, gain, shift, eps=1e-5):
    """Row-wise normalization with learnable gain/shift, x (T, F)."""
    if gain.data.shape != (x.data.shape[1],) or shift.data.shape != (x.data.shape[1],):
        raise ShapeError("layer_norm: gain/shift must match the feature dim")
    mu = x.data.mean(axis=1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv_std
    out_data = gain.data * xhat + shift.data

    def bwd(g):
        if gain.requires_grad or gain.backward_fn is not None:
            _accum(gain, (g * xhat).sum(axis=0))
        if shift.requires_grad or shift.backward_fn is not None:
            _accum(shift, g.sum(axis=0))
        if x.requires_grad or x.backward_fn is not None:
            gx = g * gain.data
            m1 = gx.mean(axis=1, keepdims=True)
            m2 = (gx * xhat).mean(axis=1, keepdims=True)
            _accum(x, inv_std * (gx - m1 - xhat * m2))

    return _make(out_data, (x, gain, shift), bwd)


def _split_heads(a, n_heads):
    t, d = a.shape
    dh = d // n_heads
    return a.reshape(t, n_heads, dh).transpose(1, 0, 2)  # (H, T, dh)


def _merge_heads(a):
    h, t, dh = a.shape
    return a.transpose(1, 0, 2).reshape(t, h * dh)


def multi_head_attention(x, wq, bq, wk, bk, wv, bv, wo, bo, n_heads,
                         return_weights=False):
    """Fused full-sequence multi-head self-attention on x (T, d).

    Returns the output tensor; with return_weights=True also returns the
    (H, T, T) softmax attention matrix as a plain array (diagnostics only,
    not part of the graph).
    """
    t, d = x.data.shape
    if d % n_heads != 0:
        raise ShapeError(f"attention: model dim {d} not divisible by {n_heads} heads")
    dh = d // n_heads
    inv_sqrt = 1.0 / math.sqrt(dh)

    q = x.data @ wq.data.T + bq.data
    k = x.data @ wk.data.T + bk.data
    v = x.data @ wv.data.T + bv.data
    qh, kh, vh = (_split_heads(a, n_heads) for a in (q, k, v))

    scores = np.einsum("htd,hsd->hts", qh, kh) * inv_sqrt
    scores -= scores.max(axis=2, keepdims=True)
    attn = np.exp(scores)
    attn /= attn.sum(axis=2, keepdims=True)

    ctx = np.einsum("hts,hsd->htd", attn, vh)
    merged = _merge_heads(ctx)
    out_data = merged @ wo.data.T + bo.data

    def bwd(g):
        if wo.requires_grad or wo.backward_fn is not None:
            _accum(wo, g.T @ merged)
        if bo.requires_grad or bo.backward_fn is not None:
            _accum(bo, g.sum(axis=0))
        d_merged = g @ wo.data
        d_ctx = _split_heads(d_merged, n_heads)

        d_attn = np.einsum("htd,hsd->hts", d_ctx, vh)
        d_vh = np.einsum("hts,htd->hsd", attn, d_ctx)
        # softmax backward per row
        inner = (d_attn * attn).sum(axis=2, keepdims=True)
        d_scores = attn * (d_attn - inner)
        d_qh = np.einsum("hts,hsd->htd", d_scores, kh) * inv_sqrt
        d_kh = np.einsum("hts,htd->hsd", d_scores, qh) * inv_sqrt

        d_q = _merge_heads(d_qh)
        d_k = _merge_heads(d_kh)
        d_v = _merge_heads(d_vh)
        for w, b, dz in ((wq, bq, d_q), (wk, bk, d_k), (wv, bv, d_v)):
            if w.requires_grad or w.backward_fn is not None:
                _accum(w, dz.T @ x.data)
            if b.requires_grad or b.backward_fn is not None:
                _accum(b, dz.sum(axis=0))
        if x.requires_grad or x.backward_fn is not None:
            dx = d_q @ wq.data + d_k @ wk.data + d_v @ wv.data
            _accum(x, dx)

    out = _make(out_data, (x, wq, bq, wk, bk, wv, bv, wo, bo), bwd)
    if return_weights:
        return out, attn
    return out


def dropout(x, p, rng, training):
    """Inverted dropout; identity when not training or p == 0."""
    if not training or p <= 0.0:
        return x
    keep = 1.0 - p
    mask = (rng.random(x.data.shape) < keep).astype(x.data.dtype) / keep
    return mul_const(x, mask)


# ---------------------------------------------------------------------------
# losses


def softmax_rows(z):
    """Plain-array row softmax used by inference paths."""
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax_rows(z):
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax_cross_entropy(logits, labels):
    """Mean cross-entropy over frames; labels is an int vector of class ids."""
    labels = np.asarray(labels)
    t, c = logits.data.shape
    if labels.shape != (t,):
        raise ShapeError(f"labels shape {labels.shape} != ({t},)")
    if labels.min() < 0 or labels.max() >= c:
        raise ShapeError("label id out of range")
    logp = log_softmax_rows(logits.data)
    loss = -logp[np.arange(t), labels].mean()
    out_data = np.asarray(loss, dtype=logits.data.dtype)

    def bwd(g):
        p = np.exp(logp)
        p[np.arange(t), labels] -= 1.0
        _accum(logits, (float(g) / t) * p)

    return _make(out_data, (logits,), bwd)
