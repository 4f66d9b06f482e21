"""Always-on first-pass detector.

A small fully-connected network produces per-frame posteriors over 20
classes (18 keyword phoneme classes, silence, other speech).  A keyword
HMM with a left-to-right chain of 18 keyword states (three states per
keyword phoneme) embedded between background states decodes those
posteriors in a streaming fashion.  The trigger score is the Viterbi
log-likelihood gap between the best path that traverses the whole
keyword chain and the best background-only path, normalized by the
keyword segment length, so 0 marks the break-even point.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, EmptyInputError, ShapeError
from .features import FeatureConfig
from .ndcore import Checkpoint, LinearLayer, collect_parameters, constant, no_grad
from .ndcore.tensor import linear as linear_op
from .tac import Transform

NUM_DNN_CLASSES = 20
NUM_KEYWORD_CLASSES = 18
SILENCE_CLASS = 18
FILLER_CLASS = 19

STATES_PER_PHONEME = 3
DEFAULT_TRIGGER_THRESHOLD = 0.0


class FirstPassDnn:
    """Five 64-unit hidden layers with PReLU, softmax over 20 classes."""

    def __init__(self, input_dim=280, hidden=64, depth=5, n_classes=NUM_DNN_CLASSES,
                 rng=None, dtype=np.float32, init="glorot"):
        self.input_dim = input_dim
        self.hidden = hidden
        self.depth = depth
        self.n_classes = n_classes
        self.layers = []
        d = input_dim
        for _ in range(depth):
            self.layers.append(Transform(d, hidden, rng, dtype, init))
            d = hidden
        self.out = LinearLayer(d, n_classes, rng=rng, dtype=dtype, init=init)

    def parameters(self):
        params = {f"h{i}": layer for i, layer in enumerate(self.layers)}
        params["out"] = self.out
        return params

    def logits(self, x):
        """Tape-tracked forward to unnormalized class scores."""
        if x.data.ndim != 2 or x.data.shape[1] != self.input_dim:
            raise ShapeError(
                f"expected T x {self.input_dim} features, got {x.data.shape}")
        h = x
        for layer in self.layers:
            h = layer(h)
        return linear_op(h, self.out.weight, self.out.bias)

    def posteriors(self, feats):
        """Array-in, array-out posterior computation."""
        feats = np.asarray(feats.frames if hasattr(feats, "frames") else feats)
        with no_grad():
            z = self.logits(constant(feats)).data
        z = z - z.max(axis=1, keepdims=True)
        p = np.exp(z)
        p /= p.sum(axis=1, keepdims=True)
        return p


def dnn_posteriors(model, feats):
    return model.posteriors(feats)


@dataclass
class TriggerResult:
    """Outcome of decoding one channel (or the selected best channel)."""

    score: float
    channel: int = 0
    segment: tuple = (0, 0)

    def __post_init__(self):
        start, end = self.segment
        if start > end:
            raise ShapeError(f"segment start {start} > end {end}")


# state layout: 0 silence-before, 1 filler-before, 2..2+K-1 keyword chain,
# then silence-after, filler-after
_PRE_SIL = 0
_PRE_FIL = 1
_KW_FIRST = 2


class KeywordHmm:
    """Keyword chain embedded in a background loop.

    Emissions reuse the detector posteriors directly with a floor; each
    keyword phoneme spans `states_per_phoneme` consecutive chain states
    that all emit that phoneme's class.
    """

    def __init__(self, keyword_phonemes, states_per_phoneme=STATES_PER_PHONEME,
                 kw_self=0.6, bg_self=0.9, bg_cross=0.04, kw_entry=0.06,
                 post_cross=0.1, init_sil=0.45, init_fil=0.45,
                 emission_floor=1e-10):
        keyword_phonemes = tuple(int(p) for p in keyword_phonemes)
        if not keyword_phonemes:
            raise ConfigError("keyword needs at least one phoneme")
        for p in keyword_phonemes:
            if not 0 <= p < NUM_KEYWORD_CLASSES:
                raise ConfigError(
                    f"keyword phoneme {p} outside the {NUM_KEYWORD_CLASSES} keyword classes")
        if not 0 < kw_self < 1 or not 0 < bg_self < 1:
            raise ConfigError("transition probabilities must lie in (0, 1)")
        if abs(bg_self + bg_cross + kw_entry - 1.0) > 1e-9:
            raise ConfigError("background row must sum to 1")
        init_kw = 1.0 - init_sil - init_fil
        if init_kw <= 0:
            raise ConfigError("initial distribution must leave mass for the keyword entry")

        self.keyword_phonemes = keyword_phonemes
        self.states_per_phoneme = states_per_phoneme
        self.emission_floor = float(emission_floor)
        n_kw = len(keyword_phonemes) * states_per_phoneme
        self.num_kw_states = n_kw
        n = n_kw + 4
        self.num_states = n
        self.post_sil = _KW_FIRST + n_kw
        self.post_fil = self.post_sil + 1
        kw_last = _KW_FIRST + n_kw - 1

        # per-state emission class
        classes = np.empty(n, dtype=int)
        classes[_PRE_SIL] = SILENCE_CLASS
        classes[_PRE_FIL] = FILLER_CLASS
        for j in range(n_kw):
            classes[_KW_FIRST + j] = keyword_phonemes[j // states_per_phoneme]
        classes[self.post_sil] = SILENCE_CLASS
        classes[self.post_fil] = FILLER_CLASS
        self.state_classes = classes

        trans = np.zeros((n, n))
        for s in (_PRE_SIL, _PRE_FIL):
            trans[s, s] = bg_self
            trans[s, _PRE_FIL if s == _PRE_SIL else _PRE_SIL] = bg_cross
            trans[s, _KW_FIRST] = kw_entry
        for j in range(n_kw):
            s = _KW_FIRST + j
            trans[s, s] = kw_self
            if s < kw_last:
                trans[s, s + 1] = 1.0 - kw_self
            else:
                trans[s, self.post_sil] = (1.0 - kw_self) / 2
                trans[s, self.post_fil] = (1.0 - kw_self) / 2
        for s in (self.post_sil, self.post_fil):
            trans[s, s] = 1.0 - post_cross
            trans[s, self.post_fil if s == self.post_sil else self.post_sil] = post_cross
        row_sums = trans.sum(axis=1)
        if not np.allclose(row_sums, 1.0, atol=1e-9):
            raise ConfigError(f"transition rows must sum to 1, got {row_sums}")
        self.transitions = trans
        with np.errstate(divide="ignore"):
            self.log_trans = np.log(trans)

        init = np.zeros(n)
        init[_PRE_SIL] = init_sil
        init[_PRE_FIL] = init_fil
        init[_KW_FIRST] = init_kw
        self.init_probs = init
        with np.errstate(divide="ignore"):
            self.log_init = np.log(init)

        self.kw_last = kw_last
        # states that certify a complete keyword traversal
        self.complete_states = np.array([kw_last, self.post_sil, self.post_fil])

    def emission_logprobs(self, posteriors):
        return np.log(np.maximum(posteriors[:, self.state_classes], self.emission_floor))

    def describe(self):
        lines = [
            f"states: {self.num_states}",
            f"keyword phonemes: {self.keyword_phonemes}",
            f"states per phoneme: {self.states_per_phoneme}",
            f"emission floor: {self.emission_floor:g}",
            "state -> emission class: " + " ".join(
                f"{s}:{c}" for s, c in enumerate(self.state_classes)),
            "transitions (row -> col : prob):",
        ]
        n = self.num_states
        for s in range(n):
            row = " ".join(f"{d}:{self.transitions[s, d]:.3f}"
                           for d in range(n) if self.transitions[s, d] > 0)
            lines.append(f"  {s} -> {row}")
        return "\n".join(lines)


def _check_posteriors(posteriors):
    posteriors = np.asarray(posteriors, dtype=np.float64)
    if posteriors.ndim != 2:
        raise ShapeError(f"posteriorgram must be T x C, got {posteriors.shape}")
    if posteriors.shape[0] == 0:
        raise EmptyInputError("empty posteriorgram")
    if posteriors.shape[1] != NUM_DNN_CLASSES:
        raise ShapeError(f"need {NUM_DNN_CLASSES} classes, got {posteriors.shape[1]}")
    if np.any(posteriors < -1e-9):
        raise ConfigError("posteriors must be non-negative")
    if np.any(np.abs(posteriors.sum(axis=1) - 1.0) > 1e-3):
        raise ConfigError("posterior rows must lie on the simplex")
    return posteriors


class StreamingDecoder:
    """Frame-incremental Viterbi with O(states) memory.

    Each state carries the running best log-probability plus the keyword
    segment bookkeeping of its best path, so the full backtrace is never
    stored and per-frame work stays bounded.
    """

    def __init__(self, hmm):
        self.hmm = hmm
        self.reset()

    def reset(self):
        self.frame = 0
        self.delta = None
        self.seg_start = None
        self.seg_end = None

    def step(self, posterior_row):
        hmm = self.hmm
        row = np.asarray(posterior_row, dtype=np.float64)
        em = np.log(np.maximum(row[hmm.state_classes], hmm.emission_floor))
        t = self.frame
        if t == 0:
            self.delta = hmm.log_init + em
            self.seg_start = np.zeros(hmm.num_states, dtype=int)
            self.seg_end = np.zeros(hmm.num_states, dtype=int)
        else:
            scores = self.delta[:, None] + hmm.log_trans
            best_prev = np.argmax(scores, axis=0)
            self.delta = scores[best_prev, np.arange(hmm.num_states)] + em
            self.seg_start = self.seg_start[best_prev].copy()
            self.seg_end = self.seg_end[best_prev].copy()
            if best_prev[_KW_FIRST] != _KW_FIRST:
                self.seg_start[_KW_FIRST] = t
            for s in (hmm.post_sil, hmm.post_fil):
                if best_prev[s] == hmm.kw_last:
                    self.seg_end[s] = t - 1
        self.seg_end[hmm.kw_last] = t
        self.frame += 1
        return self.result()

    def result(self):
        if self.frame == 0:
            raise EmptyInputError("no frames decoded")
        hmm = self.hmm
        bg = max(self.delta[_PRE_SIL], self.delta[_PRE_FIL])
        idx = hmm.complete_states[np.argmax(self.delta[hmm.complete_states])]
        kw = self.delta[idx]
        if np.isneginf(kw):
            return TriggerResult(score=-np.inf, segment=(0, 0))
        start = int(self.seg_start[idx])
        end = int(self.seg_end[idx])
        length = max(1, end - start + 1)
        return TriggerResult(score=float((kw - bg) / length), segment=(start, end))


def hmm_decode_stream(hmm, posteriors, channel=0):
    """Run the streaming decoder over a full posteriorgram."""
    posteriors = _check_posteriors(posteriors)
    decoder = StreamingDecoder(hmm)
    result = None
    for row in posteriors:
        result = decoder.step(row)
    result.channel = channel
    return result


def hmm_decode_offline(hmm, posteriors, channel=0):
    """Full-trellis Viterbi with an explicit backtrace.

    Independent reference for the streaming decoder: plain loops, stored
    backpointers, segment recovered from the traced state path.
    """
    posteriors = _check_posteriors(posteriors)
    em = hmm.emission_logprobs(posteriors)
    T = posteriors.shape[0]
    n = hmm.num_states
    delta = np.full((T, n), -np.inf)
    psi = np.zeros((T, n), dtype=int)
    delta[0] = hmm.log_init + em[0]
    for t in range(1, T):
        for s in range(n):
            best_p = 0
            best_v = -np.inf
            for p in range(n):
                v = delta[t - 1, p] + hmm.log_trans[p, s]
                if v > best_v:
                    best_v = v
                    best_p = p
            delta[t, s] = best_v + em[t, s]
            psi[t, s] = best_p
    bg = max(delta[T - 1, _PRE_SIL], delta[T - 1, _PRE_FIL])
    best_s = -1
    kw = -np.inf
    for s in hmm.complete_states:
        if delta[T - 1, s] > kw:
            kw = delta[T - 1, s]
            best_s = s
    if np.isneginf(kw):
        return TriggerResult(score=-np.inf, channel=channel, segment=(0, 0))
    path = np.zeros(T, dtype=int)
    path[T - 1] = best_s
    for t in range(T - 1, 0, -1):
        path[t - 1] = psi[t, path[t]]
    in_kw = (path >= _KW_FIRST) & (path <= hmm.kw_last)
    frames = np.nonzero(in_kw)[0]
    start, end = int(frames[0]), int(frames[-1])
    length = max(1, end - start + 1)
    return TriggerResult(score=float((kw - bg) / length), channel=channel,
                         segment=(start, end))


def select_channel(results):
    """Highest score wins; ties go to the lowest channel index."""
    if not results:
        raise EmptyInputError("select_channel: no results")
    best = results[0]
    for r in results[1:]:
        if r.score > best.score:
            best = r
    return best


# ---------------------------------------------------------------------------
# checkpoint I/O

_FP_TAG = "mcvt-firstpass-v1"


def save_first_pass(path, model, norm_mean, norm_std, feat_config):
    ckpt = Checkpoint(tag=_FP_TAG)
    ckpt.meta["input_dim"] = str(model.input_dim)
    ckpt.meta["hidden"] = str(model.hidden)
    ckpt.meta["depth"] = str(model.depth)
    ckpt.meta["n_classes"] = str(model.n_classes)
    for key, val in feat_config.to_meta().items():
        ckpt.meta[f"feat.{key}"] = val
    ckpt.entries["norm.mean"] = np.asarray(norm_mean, dtype=np.float32)
    ckpt.entries["norm.std"] = np.asarray(norm_std, dtype=np.float32)
    for name, p in collect_parameters("fp.dnn", model).items():
        ckpt.entries[name] = p.data
    ckpt.save(path)


def load_first_pass(path):
    ckpt = Checkpoint.load(path)
    if ckpt.tag != _FP_TAG:
        raise ConfigError(f"not a first-pass checkpoint: tag '{ckpt.tag}'")
    model = FirstPassDnn(input_dim=int(ckpt.meta["input_dim"]),
                         hidden=int(ckpt.meta["hidden"]),
                         depth=int(ckpt.meta["depth"]),
                         n_classes=int(ckpt.meta["n_classes"]))
    for name, p in collect_parameters("fp.dnn", model).items():
        p.data = ckpt.entries[name].copy()
    feat_meta = {k[len("feat."):]: v for k, v in ckpt.meta.items() if k.startswith("feat.")}
    feat_config = FeatureConfig.from_meta(feat_meta)
    return model, ckpt.entries["norm.mean"], ckpt.entries["norm.std"], feat_config
