"""Alignment-free sequence loss and keyword scoring.

The loss sums, over every monotonic alignment of a label sequence onto
the frame axis, the product of per-frame posteriors, using the usual
blank-augmented dynamic program.  Collapse rule: merge adjacent repeats,
then drop blanks.  Worked example with blank "-":

    frames:   a a - a b b
    collapse: a   - a b      (merge repeats)
              a     a b      (drop blanks)   -> labels (a, a, b)

All recursions run in log space with logaddexp so that impossible
alignments stay at -inf instead of turning into NaN.  The keyword score
compares the keyword's alignment score against the unconstrained
best-path score, normalized by the frame count, so that 0 means the
best frame-wise path already spells the keyword.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError
from .ndcore.tensor import Tensor, _accum, _make, constant

NUM_PHONEMES = 54
BLANK_ID = 54
NUM_CTC_LABELS = NUM_PHONEMES + 1

NEG_INF = -np.inf


@dataclass(frozen=True)
class LabelSequence:
    """Phoneme id sequence; ids live in [0, n_classes) minus the blank."""

    ids: tuple
    n_classes: int = NUM_CTC_LABELS
    blank: int = BLANK_ID

    def __post_init__(self):
        object.__setattr__(self, "ids", tuple(int(i) for i in self.ids))
        if len(self.ids) == 0:
            raise ConfigError("label sequence must be non-empty")
        if not 0 <= self.blank < self.n_classes:
            raise ConfigError(f"blank id {self.blank} outside alphabet of {self.n_classes}")
        for i in self.ids:
            if not 0 <= i < self.n_classes:
                raise ConfigError(f"label id {i} outside alphabet of {self.n_classes}")
            if i == self.blank:
                raise ConfigError(f"label id {i} equals the blank id")

    def __len__(self):
        return len(self.ids)


def _as_labels(labels, n_classes, blank):
    if isinstance(labels, LabelSequence):
        if labels.n_classes != n_classes or labels.blank != blank:
            raise ConfigError("label sequence alphabet does not match the logits")
        return labels
    return LabelSequence(tuple(np.asarray(labels, dtype=int).tolist()), n_classes, blank)


def _check_logits(logits):
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 2:
        raise ShapeError(f"logits must be T x C, got shape {logits.shape}")
    if logits.shape[0] < 1 or logits.shape[1] < 2:
        raise ShapeError(f"logits too small: {logits.shape}")
    if not np.all(np.isfinite(logits)):
        raise ShapeError("logits contain non-finite values")
    return logits


def _log_softmax(logits):
    m = logits.max(axis=1, keepdims=True)
    z = logits - m
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def _expand(labels):
    """Blank-augmented state sequence [b, l1, b, l2, ..., lL, b]."""
    lab = np.full(2 * len(labels.ids) + 1, labels.blank, dtype=int)
    lab[1::2] = labels.ids
    return lab


def _skip_mask(lab, blank):
    """States reachable by the two-step transition (skip over a blank)."""
    mask = np.zeros(lab.size, dtype=bool)
    if lab.size > 2:
        mask[2:] = (lab[2:] != blank) & (lab[2:] != lab[:-2])
    return mask


def _shift1(row):
    out = np.empty_like(row)
    out[0] = NEG_INF
    out[1:] = row[:-1]
    return out


def _shift2(row):
    out = np.full_like(row, NEG_INF)
    out[2:] = row[:-2]
    return out


def _forward_trellis(log_probs, lab, skip):
    T = log_probs.shape[0]
    S = lab.size
    alpha = np.full((T, S), NEG_INF)
    alpha[0, 0] = log_probs[0, lab[0]]
    if S > 1:
        alpha[0, 1] = log_probs[0, lab[1]]
    for t in range(1, T):
        prev = alpha[t - 1]
        cand = np.logaddexp(prev, _shift1(prev))
        cand = np.where(skip, np.logaddexp(cand, _shift2(prev)), cand)
        alpha[t] = cand + log_probs[t, lab]
    return alpha


def ctc_forward_logprob(logits, labels, blank=BLANK_ID):
    """Log-probability of the label sequence; -inf when no alignment fits."""
    logits = _check_logits(logits)
    labels = _as_labels(labels, logits.shape[1], blank)
    log_probs = _log_softmax(logits)
    lab = _expand(labels)
    alpha = _forward_trellis(log_probs, lab, _skip_mask(lab, blank))
    tail = alpha[-1, -1]
    if lab.size > 1:
        tail = np.logaddexp(tail, alpha[-1, -2])
    return float(tail)


def viterbi_alignment_logprob(logits, labels, blank=BLANK_ID):
    """Log-probability of the single best alignment; -inf when none fits."""
    logits = _check_logits(logits)
    labels = _as_labels(labels, logits.shape[1], blank)
    log_probs = _log_softmax(logits)
    lab = _expand(labels)
    skip = _skip_mask(lab, blank)
    T = log_probs.shape[0]
    delta = np.full(lab.size, NEG_INF)
    delta[0] = log_probs[0, lab[0]]
    if lab.size > 1:
        delta[1] = log_probs[0, lab[1]]
    for t in range(1, T):
        cand = np.maximum(delta, _shift1(delta))
        cand = np.where(skip, np.maximum(cand, _shift2(delta)), cand)
        delta = cand + log_probs[t, lab]
    best = delta[-1]
    if lab.size > 1:
        best = max(best, delta[-2])
    return float(best)


def ctc_loss_grad(logits, labels, blank=BLANK_ID):
    """Negative log-likelihood and its gradient with respect to the logits.

    Infeasible alignments (too few frames) give loss = +inf with an
    all-zero gradient so that callers can skip the example.
    """
    logits = _check_logits(logits)
    labels = _as_labels(labels, logits.shape[1], blank)
    log_probs = _log_softmax(logits)
    lab = _expand(labels)
    skip = _skip_mask(lab, blank)
    T, C = log_probs.shape
    S = lab.size

    alpha = _forward_trellis(log_probs, lab, skip)
    log_z = alpha[-1, -1]
    if S > 1:
        log_z = np.logaddexp(log_z, alpha[-1, -2])
    if log_z == NEG_INF:
        return np.inf, np.zeros_like(logits)

    # beta excludes the emission at the current frame, so the product
    # alpha + beta is the log-mass of all complete paths through (t, s)
    # and never needs a subtraction that could produce NaN.
    beta = np.full((T, S), NEG_INF)
    beta[-1, -1] = 0.0
    if S > 1:
        beta[-1, -2] = 0.0
    rskip = np.zeros(S, dtype=bool)
    rskip[:-2] = skip[2:] if S > 2 else False
    for t in range(T - 2, -1, -1):
        nxt = beta[t + 1] + log_probs[t + 1, lab]
        shifted = np.empty(S)
        shifted[:-1] = nxt[1:]
        shifted[-1] = NEG_INF
        cand = np.logaddexp(nxt, shifted)
        skip2 = np.full(S, NEG_INF)
        skip2[:-2] = nxt[2:]
        beta[t] = np.where(rskip, np.logaddexp(cand, skip2), cand)

    gamma = np.exp(alpha + beta - log_z)
    occupancy = np.zeros((T, C))
    for s in range(S):
        occupancy[:, lab[s]] += gamma[:, s]
    grad = np.exp(log_probs) - occupancy
    return float(-log_z), grad


def ctc_loss(logits, labels, blank=BLANK_ID):
    """Tape op: scalar negative log-likelihood differentiable in the logits."""
    if not isinstance(logits, Tensor):
        logits = constant(logits)
    loss, grad = ctc_loss_grad(logits.data, labels, blank=blank)
    grad = grad.astype(logits.data.dtype, copy=False)
    out_data = np.asarray(loss, dtype=logits.data.dtype)

    def bwd(g):
        if logits.requires_grad or logits.backward_fn is not None:
            _accum(logits, np.asarray(g, dtype=logits.data.dtype) * grad)

    return _make(out_data, (logits,), bwd)


def best_path_logprob(logits):
    """Unconstrained frame-wise max log-posterior sum."""
    logits = _check_logits(logits)
    return float(_log_softmax(logits).max(axis=1).sum())


def keyword_score(logits, keyword, blank=BLANK_ID, mode="viterbi"):
    """Length-normalized alignment-vs-best-path log ratio, always <= 0 in
    viterbi mode with equality exactly when some best frame-wise path
    spells the keyword.

    mode="viterbi" uses the single best keyword alignment; mode="forward"
    uses the full alignment sum, which can exceed 0 when many alignments
    share the mass.
    """
    logits = _check_logits(logits)
    if mode == "viterbi":
        aligned = viterbi_alignment_logprob(logits, keyword, blank=blank)
    elif mode == "forward":
        aligned = ctc_forward_logprob(logits, keyword, blank=blank)
    else:
        raise ConfigError(f"unknown keyword_score mode '{mode}'")
    return (aligned - best_path_logprob(logits)) / logits.shape[0]
