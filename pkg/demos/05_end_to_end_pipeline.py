"""Tiny end-to-end run: synthesize, train, fix an operating point, report.

Everything is scaled down (a handful of utterances, one epoch, a tiny
Transformer) so the full two-stage pipeline finishes in well under a
minute; the same flow at realistic sizes is driven by the `mcvt`
command-line tool with a YAML config.
"""

import os
import tempfile

from mcvt.evalharness import (fix_operating_point, frr_report, load_pipeline,
                              positives_by_condition, score_corpus)
from mcvt.simcorpus import CorpusConfig, build_corpus
from mcvt.trainloop import TrainConfig, train

TINY = {"model_dim": 16, "n_heads": 2, "ff_dim": 32, "n_blocks": 1,
        "tac_hidden": 8}


def main():
    root = tempfile.mkdtemp(prefix="mcvt-demo-")
    corpus_dir = os.path.join(root, "corpus")
    models_dir = os.path.join(root, "models")

    print("synthesizing corpus ...")
    build_corpus(CorpusConfig(
        out_dir=corpus_dir, base_seed=42, train_utterances=12,
        dev_positives_per_condition=1, dev_negatives=2,
        eval_positives_per_condition=2, negative_hours=30.0 / 3600.0,
        negative_clip_seconds=10.0))

    print("training the always-on first pass ...")
    train(TrainConfig(variant="firstpass", corpus_dir=corpus_dir,
                      out_dir=models_dir, epochs=1, batch_size=4,
                      fp_hidden=8, fp_depth=2))

    print("training the second-pass re-scorer (modtac variant) ...")
    train(TrainConfig(variant="modtac", corpus_dir=corpus_dir,
                      out_dir=models_dir, epochs=1, batch_size=4,
                      model_overrides=TINY))

    pipeline = load_pipeline(os.path.join(models_dir, "firstpass.ckpt"),
                             os.path.join(models_dir, "modtac.ckpt"),
                             fp_threshold=-10.0)
    print("scoring positives and scanning negatives ...")
    positives = score_corpus(pipeline, corpus_dir, split="eval")
    negatives = score_corpus(pipeline, corpus_dir, split="negative")
    print(f"  {len(positives.positives)} positives, "
          f"{len(negatives.events)} negative events over "
          f"{negatives.negative_hours * 3600:.0f} s")

    # unrealistically high FA target: the demo only has seconds of audio
    op = fix_operating_point([e.score for e in negatives.events],
                             negatives.negative_hours,
                             target_fa_per_hour=400.0)
    report = frr_report(positives_by_condition(positives.positives), op,
                        negative_scores=[e.score for e in negatives.events],
                        hours=negatives.negative_hours)
    print(report.to_table())
    print(f"artifacts in {root}")


if __name__ == "__main__":
    main()
