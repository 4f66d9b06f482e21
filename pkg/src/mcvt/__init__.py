"""Two-stage multichannel wake-word detection.

A compact, numpy-backed implementation of a voice-trigger pipeline: an
always-on per-channel detector with channel selection in front of a
Transformer re-scorer whose input channels are fused by a
transform-average-concatenate block (optionally informed of the selected
channel), plus a synthetic multichannel front-end emulator and an FRR/FA
evaluation harness.
"""

__version__ = "0.1.0"

from . import (cli, ctc, evalharness, features, firstpass,  # noqa: F401
               ndcore, secondpass, simcorpus, tac, trainloop)
