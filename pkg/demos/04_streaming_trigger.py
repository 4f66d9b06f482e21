"""The always-on first pass: frame-synchronous keyword triggering.

Runs the 22-state keyword HMM over a synthetic posteriorgram frame by
frame, printing the running trigger score, and confirms the streaming
decoder lands exactly on the full-sequence Viterbi answer.  The score is
the length-normalized log-ratio between the best path that completes
the keyword and the best background-only path, so values near 0 mean
"as good as background" and strongly positive means "keyword heard".
"""

import numpy as np

from mcvt.firstpass import (KeywordHmm, StreamingDecoder, hmm_decode_offline,
                            hmm_decode_stream)
from mcvt.simcorpus import KEYWORD_PHONEMES, SILENCE_CLASS


def posteriorgram_with_keyword(rng, lead, frames_per_state, tail):
    """Soft one-hot frames: silence, then the keyword states, then silence."""
    hmm = KeywordHmm(KEYWORD_PHONEMES)
    classes = [SILENCE_CLASS] * lead
    for phoneme in KEYWORD_PHONEMES:
        classes += [phoneme] * (3 * frames_per_state)
    classes += [SILENCE_CLASS] * tail
    post = np.full((len(classes), 20), 0.02)
    for t, c in enumerate(classes):
        post[t, c] = 1.0
    post /= post.sum(axis=1, keepdims=True)
    return post + rng.uniform(0, 1e-6, post.shape), hmm


def main():
    rng = np.random.default_rng(11)
    post, hmm = posteriorgram_with_keyword(rng, lead=8, frames_per_state=2,
                                           tail=8)
    post /= post.sum(axis=1, keepdims=True)

    decoder = StreamingDecoder(hmm)
    for t, row in enumerate(post):
        result = decoder.step(row)
        if t % 8 == 7 or t == len(post) - 1:
            print(f"frame {t:3d}: score {result.score:+.3f} "
                  f"segment {result.segment}")

    stream = hmm_decode_stream(hmm, post)
    offline = hmm_decode_offline(hmm, post)
    print(f"streaming score: {stream.score:+.6f} segment {stream.segment}")
    print(f"offline score:   {offline.score:+.6f} segment {offline.segment}")
    print(f"difference:      {abs(stream.score - offline.score):.2e}")


if __name__ == "__main__":
    main()
