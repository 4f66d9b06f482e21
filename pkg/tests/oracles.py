"""Brute-force oracles shared by the unit and acceptance tests.

The alignment-sum oracle literally enumerates every path over the
alphabet, collapses each one with the canonical rule (merge adjacent
repeats, then drop blanks), and sums the per-frame posterior products of
the paths whose collapse equals the target labels.  It shares no code
with the dynamic-program implementation under test.
"""

import functools
import itertools

import numpy as np
from scipy.special import log_softmax, logsumexp


def collapse(path, blank):
    out = []
    prev = None
    for s in path:
        if s != prev and s != blank:
            out.append(s)
        prev = s
    return tuple(out)


@functools.lru_cache(maxsize=None)
def _paths_by_collapse(alphabet_size, num_frames, blank):
    groups = {}
    for path in itertools.product(range(alphabet_size), repeat=num_frames):
        groups.setdefault(collapse(path, blank), []).append(path)
    return {key: np.array(paths, dtype=int) for key, paths in groups.items()}


def _path_scores(logits, labels, blank):
    logits = np.asarray(logits, dtype=np.float64)
    num_frames, alphabet_size = logits.shape
    paths = _paths_by_collapse(alphabet_size, num_frames, blank).get(tuple(labels))
    if paths is None:
        return None
    log_probs = log_softmax(logits, axis=1)
    return log_probs[np.arange(num_frames)[None, :], paths].sum(axis=1)


def enum_forward_logprob(logits, labels, blank):
    scores = _path_scores(logits, labels, blank)
    return -np.inf if scores is None else float(logsumexp(scores))


def enum_best_alignment_logprob(logits, labels, blank):
    scores = _path_scores(logits, labels, blank)
    return -np.inf if scores is None else float(scores.max())


def random_ctc_instance(rng, max_frames=8, max_labels=3, max_alphabet=5):
    """Random (logits, labels, blank) with blank fixed to the last id."""
    num_frames = int(rng.integers(1, max_frames + 1))
    alphabet_size = int(rng.integers(3, max_alphabet + 1))
    blank = alphabet_size - 1
    length = int(rng.integers(1, max_labels + 1))
    labels = tuple(int(i) for i in rng.integers(0, blank, size=length))
    logits = rng.standard_normal((num_frames, alphabet_size)) * 2.0
    return logits, labels, blank
