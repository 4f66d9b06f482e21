"""Second-pass acoustic model.

Variants share one Transformer encoder stack (input projection,
sinusoidal positions, pre-norm self-attention blocks, linear output to
the 55 sequence classes) and differ only in how the channels are fused
in front of it:

  baseline  one channel in, no fusion
  tac       channel fusion block over the regular channels, then a
            channel average pool
  modtac    selected-channel fusion block; the pool covers the regular
            outputs plus (by default) the selected-channel output
  concat    plain feature concatenation over a fixed channel count;
            ablation only, kept for comparison, not a supported variant
"""

from dataclasses import dataclass, replace

import numpy as np

from .ctc import NUM_CTC_LABELS, keyword_score
from .errors import ConfigError, ShapeError
from .features import FeatureConfig, FeatureSequence
from .ndcore import Checkpoint, LinearLayer, PReLU, collect_parameters, constant, no_grad, parameter
from .ndcore.layers import glorot_uniform
from .ndcore.tensor import (
    Tensor,
    add,
    add_const,
    concat_cols,
    dropout,
    layer_norm,
    linear as linear_op,
    mean_stack,
    multi_head_attention,
)
from .tac import ModTacBlock, MultichannelBatch, TacBlock

VARIANTS = ("baseline", "tac", "modtac", "concat")


@dataclass(frozen=True)
class ModelConfig:
    input_dim: int = 280
    model_dim: int = 256
    n_heads: int = 4
    ff_dim: int = 1024
    n_blocks: int = 6
    tac_hidden: int = 768
    n_out: int = NUM_CTC_LABELS
    n_channels: int = 4
    dropout: float = 0.1
    pool_includes_sc: bool = True

    def __post_init__(self):
        if self.model_dim % self.n_heads != 0:
            raise ConfigError(
                f"model dim {self.model_dim} not divisible by {self.n_heads} heads")
        if min(self.input_dim, self.model_dim, self.ff_dim, self.n_blocks,
               self.tac_hidden, self.n_out, self.n_channels) < 1:
            raise ConfigError("all architecture sizes must be positive")

    @classmethod
    def preset(cls, name, **overrides):
        if name == "paper":
            base = cls()
        elif name == "desk":
            base = cls(model_dim=64, ff_dim=256, n_blocks=2, tac_hidden=128)
        else:
            raise ConfigError(f"unknown preset '{name}' (expected desk or paper)")
        return replace(base, **overrides)

    def to_meta(self):
        return {
            "input_dim": str(self.input_dim), "model_dim": str(self.model_dim),
            "n_heads": str(self.n_heads), "ff_dim": str(self.ff_dim),
            "n_blocks": str(self.n_blocks), "tac_hidden": str(self.tac_hidden),
            "n_out": str(self.n_out), "n_channels": str(self.n_channels),
            "dropout": repr(self.dropout),
            "pool_includes_sc": str(self.pool_includes_sc).lower(),
        }

    @classmethod
    def from_meta(cls, meta):
        return cls(
            input_dim=int(meta["input_dim"]), model_dim=int(meta["model_dim"]),
            n_heads=int(meta["n_heads"]), ff_dim=int(meta["ff_dim"]),
            n_blocks=int(meta["n_blocks"]), tac_hidden=int(meta["tac_hidden"]),
            n_out=int(meta["n_out"]), n_channels=int(meta["n_channels"]),
            dropout=float(meta["dropout"]),
            pool_includes_sc=meta["pool_includes_sc"] == "true",
        )


def sinusoidal_positions(n_frames, dim, dtype=np.float32):
    """Parameter-free additive position code: sin on even, cos on odd dims."""
    pos = np.arange(n_frames, dtype=np.float64)[:, None]
    idx = np.arange(dim, dtype=np.float64)[None, :]
    angles = pos / np.power(10000.0, 2.0 * (idx // 2) / dim)
    table = np.empty((n_frames, dim))
    table[:, 0::2] = np.sin(angles[:, 0::2])
    table[:, 1::2] = np.cos(angles[:, 1::2])
    return table.astype(dtype)


class LayerNormLayer:
    def __init__(self, dim, dtype=np.float32):
        self.gain = parameter(np.ones(dim, dtype=dtype), name="gain")
        self.shift = parameter(np.zeros(dim, dtype=dtype), name="shift")

    def __call__(self, x):
        return layer_norm(x, self.gain, self.shift)

    def parameters(self):
        return {"gain": self.gain, "shift": self.shift}


class AttentionLayer:
    def __init__(self, dim, n_heads, rng=None, dtype=np.float32):
        self.n_heads = n_heads

        def make(name):
            w = np.zeros((dim, dim), dtype=dtype) if rng is None \
                else glorot_uniform(rng, dim, dim, dtype)
            return parameter(w, name=name), parameter(np.zeros(dim, dtype=dtype))

        self.wq, self.bq = make("wq")
        self.wk, self.bk = make("wk")
        self.wv, self.bv = make("wv")
        self.wo, self.bo = make("wo")

    def __call__(self, x, return_weights=False):
        return multi_head_attention(x, self.wq, self.bq, self.wk, self.bk,
                                    self.wv, self.bv, self.wo, self.bo,
                                    self.n_heads, return_weights=return_weights)

    def parameters(self):
        return {"wq": self.wq, "bq": self.bq, "wk": self.wk, "bk": self.bk,
                "wv": self.wv, "bv": self.bv, "wo": self.wo, "bo": self.bo}


class EncoderBlock:
    """Pre-norm block: attention and feed-forward sublayers with residuals."""

    def __init__(self, dim, n_heads, ff_dim, rng=None, dtype=np.float32):
        self.ln1 = LayerNormLayer(dim, dtype)
        self.attn = AttentionLayer(dim, n_heads, rng, dtype)
        self.ln2 = LayerNormLayer(dim, dtype)
        self.ff1 = LinearLayer(dim, ff_dim, rng=rng, dtype=dtype)
        self.ffact = PReLU(ff_dim, dtype=dtype)
        self.ff2 = LinearLayer(ff_dim, dim, rng=rng, dtype=dtype)

    def __call__(self, x, training=False, rng=None, drop=0.0, return_weights=False):
        if return_weights:
            a, weights = self.attn(self.ln1(x), return_weights=True)
        else:
            a = self.attn(self.ln1(x))
        x = add(x, dropout(a, drop, rng, training))
        h = self.ffact(linear_op(self.ln2(x), self.ff1.weight, self.ff1.bias))
        h = linear_op(h, self.ff2.weight, self.ff2.bias)
        x = add(x, dropout(h, drop, rng, training))
        if return_weights:
            return x, weights
        return x

    def parameters(self):
        return {"ln1": self.ln1, "attn": self.attn, "ln2": self.ln2,
                "ff1": self.ff1, "ffact": self.ffact, "ff2": self.ff2}


class SecondPassModel:
    def __init__(self, variant="baseline", config=None, rng=None, dtype=np.float32):
        if variant not in VARIANTS:
            raise ConfigError(f"unknown variant '{variant}' (expected one of {VARIANTS})")
        self.variant = variant
        self.config = config or ModelConfig.preset("desk")
        self.dtype = dtype
        cfg = self.config

        if variant == "tac":
            self.frontend = TacBlock(cfg.input_dim, cfg.tac_hidden, rng, dtype)
        elif variant == "modtac":
            self.frontend = ModTacBlock(cfg.input_dim, cfg.tac_hidden, rng, dtype)
        else:
            self.frontend = None

        proj_in = cfg.input_dim * cfg.n_channels if variant == "concat" else cfg.input_dim
        self.in_proj = LinearLayer(proj_in, cfg.model_dim, rng=rng, dtype=dtype)
        self.blocks = [EncoderBlock(cfg.model_dim, cfg.n_heads, cfg.ff_dim, rng, dtype)
                       for _ in range(cfg.n_blocks)]
        self.out = LinearLayer(cfg.model_dim, cfg.n_out, rng=rng, dtype=dtype)

    def parameters(self):
        params = {}
        if self.frontend is not None:
            params["tac"] = self.frontend
        params["in"] = self.in_proj
        params["enc"] = {str(i): b for i, b in enumerate(self.blocks)}
        params["out"] = self.out
        return params

    # ---------------------------------------------------------------- fusion

    def _fuse(self, inputs):
        if self.variant == "baseline":
            if isinstance(inputs, MultichannelBatch):
                raise ConfigError("baseline takes a single channel, not a channel batch")
            if isinstance(inputs, FeatureSequence):
                inputs = inputs.frames
            if isinstance(inputs, Tensor):
                return inputs
            arr = np.asarray(inputs)
            if arr.ndim != 2:
                raise ShapeError(f"expected T x F features, got shape {arr.shape}")
            return constant(arr)
        if not isinstance(inputs, MultichannelBatch):
            raise ConfigError(f"variant '{self.variant}' needs a MultichannelBatch")
        channels = [c.frames if isinstance(c, FeatureSequence) else c
                    for c in inputs.channels]
        if self.variant == "tac":
            return mean_stack(self.frontend(channels))
        if self.variant == "modtac":
            if inputs.selected is None:
                raise ConfigError("modtac variant needs the selected channel")
            selected = inputs.selected
            if isinstance(selected, FeatureSequence):
                selected = selected.frames
            outs, out_sc = self.frontend(channels, selected)
            if self.config.pool_includes_sc:
                outs = outs + [out_sc]
            return mean_stack(outs)
        # concat ablation: fixed channel count, no fusion block
        if len(channels) != self.config.n_channels:
            raise ConfigError(
                f"concat ablation needs exactly {self.config.n_channels} channels, "
                f"got {len(channels)}")
        tensors = [c if isinstance(c, Tensor) else constant(np.asarray(c))
                   for c in channels]
        return concat_cols(tensors)

    # --------------------------------------------------------------- forward

    def encode(self, inputs, training=False, rng=None, return_attention=False):
        """Logit sequence (T x n_out) on the tape."""
        cfg = self.config
        x = self._fuse(inputs)
        h = linear_op(x, self.in_proj.weight, self.in_proj.bias)
        h = add_const(h, sinusoidal_positions(h.data.shape[0], cfg.model_dim,
                                              dtype=h.data.dtype))
        h = dropout(h, cfg.dropout, rng, training)
        attention_maps = []
        for block in self.blocks:
            if return_attention:
                h, weights = block(h, training, rng, cfg.dropout, return_weights=True)
                attention_maps.append(weights)
            else:
                h = block(h, training, rng, cfg.dropout)
        logits = linear_op(h, self.out.weight, self.out.bias)
        if return_attention:
            return logits, attention_maps
        return logits


def encode(model, inputs):
    """Array-level inference encode."""
    with no_grad():
        return model.encode(inputs).data


def second_pass_score(model, inputs, keyword, mode="viterbi"):
    return keyword_score(encode(model, inputs), keyword,
                         blank=model.config.n_out - 1, mode=mode)


def count_params(model):
    """Parameter tallies per top-level submodule plus the total."""
    counts = {}
    for name, p in collect_parameters("", model).items():
        group = name.split(".", 1)[0]
        counts[group] = counts.get(group, 0) + p.data.size
    counts["total"] = sum(counts.values())
    return counts


# ---------------------------------------------------------------------------
# checkpoint I/O

_SP_TAG = "mcvt-secondpass-v1"


def save_second_pass(path, model, norm_mean, norm_std, feat_config):
    ckpt = Checkpoint(tag=_SP_TAG)
    ckpt.meta["variant"] = model.variant
    for key, val in model.config.to_meta().items():
        ckpt.meta[f"arch.{key}"] = val
    for key, val in feat_config.to_meta().items():
        ckpt.meta[f"feat.{key}"] = val
    ckpt.entries["norm.mean"] = np.asarray(norm_mean, dtype=np.float32)
    ckpt.entries["norm.std"] = np.asarray(norm_std, dtype=np.float32)
    for name, p in collect_parameters("sp", model).items():
        ckpt.entries[name] = p.data
    ckpt.save(path)


def load_second_pass(path):
    ckpt = Checkpoint.load(path)
    if ckpt.tag != _SP_TAG:
        raise ConfigError(f"not a second-pass checkpoint: tag '{ckpt.tag}'")
    arch_meta = {k[len("arch."):]: v for k, v in ckpt.meta.items() if k.startswith("arch.")}
    config = ModelConfig.from_meta(arch_meta)
    model = SecondPassModel(variant=ckpt.meta["variant"], config=config)
    for name, p in collect_parameters("sp", model).items():
        if name not in ckpt.entries:
            raise ConfigError(f"checkpoint is missing parameter '{name}'")
        if ckpt.entries[name].shape != p.data.shape:
            raise ConfigError(f"parameter '{name}' has shape {ckpt.entries[name].shape}, "
                              f"expected {p.data.shape}")
        p.data = ckpt.entries[name].copy()
    feat_meta = {k[len("feat."):]: v for k, v in ckpt.meta.items() if k.startswith("feat.")}
    feat_config = FeatureConfig.from_meta(feat_meta)
    return model, ckpt.entries["norm.mean"], ckpt.entries["norm.std"], feat_config
