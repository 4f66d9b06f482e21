"""Release gates: one verdict line per advertised guarantee.

Gates 1-5, 7 and 8 are self-contained and take seconds.  Gate 6 compares
the trained detector variants at a fixed false-alarm rate; on first run
it synthesizes the corpus, trains four models and scans 20 h of
negatives (a few hours on one core), caching everything under
runs/acceptance/ so later runs are fast.  Prebuild outside pytest with

    python3 tests/acceptance_experiment.py

and run this file with `pytest tests/test_acceptance.py -v -rA -s` to
see the verdict lines.
"""

import time

import numpy as np
import yaml

import acceptance_experiment as ax
from mcvt import cli
from mcvt.ctc import ctc_forward_logprob
from mcvt.evalharness import bootstrap_frr_diff, fix_operating_point, frr_report
from mcvt.firstpass import (
    NUM_DNN_CLASSES,
    KeywordHmm,
    hmm_decode_offline,
    hmm_decode_stream,
)
from mcvt.ndcore.layers import collect_parameters
from mcvt.tac import ModTacBlock, TacBlock, modtac_forward, tac_forward
from oracles import enum_forward_logprob, random_ctc_instance


def _verdict(name, ok, detail):
    line = f"acceptance [{name}]: {'PASS' if ok else 'FAIL'} ({detail})"
    print(line)
    assert ok, line


def _random_case(rng):
    n = int(rng.integers(2, 5))
    feat = int(rng.integers(3, 9))
    hidden = int(rng.integers(2, 8))
    frames = int(rng.integers(1, 6))
    chans = [rng.standard_normal((frames, feat)) for _ in range(n)]
    return feat, hidden, chans


def test_1_channel_permutation_equivariance():
    t0 = time.monotonic()
    rng = np.random.default_rng(7001)
    worst = 0.0
    worst_sc = 0.0
    for _ in range(100):
        feat, hidden, chans = _random_case(rng)
        perm = rng.permutation(len(chans))

        block = TacBlock(feat, hidden, rng=rng, dtype=np.float64)
        base = tac_forward(block, chans)
        swapped = tac_forward(block, [chans[i] for i in perm])
        for j, i in enumerate(perm):
            worst = max(worst, float(np.max(np.abs(swapped[j] - base[i]))))

        mblock = ModTacBlock(feat, hidden, rng=rng, dtype=np.float64)
        sc = rng.standard_normal(chans[0].shape)
        mbase, sc_base = modtac_forward(mblock, chans, sc)
        mswap, sc_swap = modtac_forward(mblock, [chans[i] for i in perm], sc)
        for j, i in enumerate(perm):
            worst = max(worst, float(np.max(np.abs(mswap[j] - mbase[i]))))
        worst_sc = max(worst_sc, float(np.max(np.abs(sc_swap - sc_base))))
    elapsed = time.monotonic() - t0
    ok = worst <= 1e-6 and worst_sc <= 1e-6 and elapsed < 10.0
    _verdict("permutation equivariance", ok,
             f"100 pairs, N in 2..4: worst {worst:.2e}, "
             f"selected-channel drift {worst_sc:.2e}, {elapsed:.1f}s")


def test_2_zero_parameter_blocks_are_bit_exact_identity():
    rng = np.random.default_rng(7002)
    checked = 0
    for _ in range(50):
        feat, hidden, chans = _random_case(rng)
        sc = rng.standard_normal(chans[0].shape)
        block = TacBlock(feat, hidden, rng=rng, dtype=np.float64)
        mblock = ModTacBlock(feat, hidden, rng=rng, dtype=np.float64)
        for b in (block, mblock):
            for tensor in collect_parameters("", b).values():
                tensor.data[...] = 0.0
        outs = tac_forward(block, chans)
        mouts, out_sc = modtac_forward(mblock, chans, sc)
        assert all(np.array_equal(o, z) for o, z in zip(outs, chans))
        assert all(np.array_equal(o, z) for o, z in zip(mouts, chans))
        assert np.array_equal(out_sc, sc)
        checked += 1
    _verdict("residual identity floor", checked == 50,
             f"{checked} random inputs reproduced bit-exactly")


def test_3_gradients_verified_and_corruption_detected():
    t0 = time.monotonic()
    ok = True
    parts = []
    for name in cli.GRADCHECK_MODULES:
        clean = cli.gradcheck_module(name, seed=0)
        broken = cli.gradcheck_module(name, seed=0, corrupt=True)
        ok = ok and clean.passed and clean.worst <= 1e-6 and not broken.passed
        parts.append(f"{name} {clean.worst:.1e}")
    elapsed = time.monotonic() - t0
    ok = ok and elapsed < 120.0
    _verdict("gradient verification", ok,
             f"tol 1e-6 in float64, worst rel err per module: "
             f"{', '.join(parts)}; corrupted gradients all flagged; "
             f"{elapsed:.1f}s")


def test_4_ctc_matches_exhaustive_enumeration():
    rng = np.random.default_rng(7004)
    worst = 0.0
    for _ in range(200):
        logits, labels, blank = random_ctc_instance(rng)
        got = ctc_forward_logprob(logits, labels, blank=blank)
        want = enum_forward_logprob(logits, labels, blank)
        if np.isneginf(want) or np.isneginf(got):
            assert np.isneginf(want) and np.isneginf(got)
            continue
        worst = max(worst, abs(got - want))
    _verdict("alignment-sum oracle equivalence", worst <= 1e-10,
             f"200 instances, T<=8, L<=3, alphabet<=5: "
             f"worst abs diff {worst:.2e}")


def test_5_streaming_decoder_matches_offline_viterbi():
    rng = np.random.default_rng(7005)
    worst = 0.0
    for _ in range(100):
        length = int(rng.integers(2, 7))
        keyword = tuple(int(p) for p in rng.integers(0, 18, size=length))
        hmm = KeywordHmm(keyword)
        frames = int(rng.integers(5, 80))
        z = rng.standard_normal((frames, NUM_DNN_CLASSES)) * 2.0
        z -= z.max(axis=1, keepdims=True)
        post = np.exp(z)
        post /= post.sum(axis=1, keepdims=True)
        got = hmm_decode_stream(hmm, post)
        want = hmm_decode_offline(hmm, post)
        if np.isneginf(want.score):
            assert np.isneginf(got.score)
            continue
        worst = max(worst, abs(got.score - want.score))
    _verdict("streaming equals offline", worst <= 1e-9,
             f"100 random posteriorgrams, random keywords: "
             f"worst score diff {worst:.2e}")


def test_6_selected_channel_variant_wins_at_fixed_fa_rate():
    root = ax.ensure_all()
    reports = {}
    quiet = {}
    for variant in ax.VARIANTS:
        doc = ax.load_scores(root, variant)
        op = fix_operating_point(doc["event_scores"], doc["negative_hours"],
                                 ax.TARGET_FA_PER_HOUR, source=variant)
        by_cond = {}
        for p in doc["positives"]:
            by_cond.setdefault(p["condition"], []).append(p["score"])
        reports[variant] = frr_report(by_cond, op, doc["event_scores"],
                                      doc["negative_hours"])
        quiet[variant] = {p["utt_id"]: p["score"] for p in doc["positives"]
                          if p["condition"] == "quiet"}
        print(f"--- {variant} at {ax.TARGET_FA_PER_HOUR} FA/h ---")
        print(reports[variant].to_table())

    ids = sorted(set(quiet["baseline"]) & set(quiet["modtac"]))
    assert len(ids) == len(quiet["baseline"]) == len(quiet["modtac"])
    lo, hi, point = bootstrap_frr_diff(
        [quiet["baseline"][i] for i in ids],
        [quiet["modtac"][i] for i in ids],
        reports["baseline"].threshold, reports["modtac"].threshold)

    frr = {v: reports[v].per_condition for v in ax.VARIANTS}
    gain_quiet = (frr["modtac"]["quiet"] < frr["baseline"]["quiet"]) and lo > 0.0
    holds_noisy = frr["modtac"]["noisy"] <= frr["tac"]["noisy"]
    gain_overall = reports["modtac"].overall_frr <= reports["baseline"].overall_frr
    _verdict(
        "selected-channel gains", gain_quiet and holds_noisy and gain_overall,
        f"quiet FRR {frr['baseline']['quiet']:.3f} -> {frr['modtac']['quiet']:.3f} "
        f"paired 90% CI ({lo:+.3f}, {hi:+.3f}); "
        f"noisy FRR tac {frr['tac']['noisy']:.3f} vs modtac {frr['modtac']['noisy']:.3f}; "
        f"overall FRR {reports['baseline'].overall_frr:.3f} -> "
        f"{reports['modtac'].overall_frr:.3f}")


def test_7_parameter_count_ordering_at_full_size():
    counts = cli.preset_param_counts("paper")
    totals = {v: counts[v]["total"] for v in ("baseline", "tac", "modtac")}
    documented = {"baseline": 4_830_775, "tac": 6_069_351, "modtac": 6_499_991}
    ordered = totals["baseline"] < totals["tac"] < totals["modtac"]
    _verdict("parameter-count ordering", ordered and totals == documented,
             f"baseline {totals['baseline']:,} < tac {totals['tac']:,} "
             f"< modtac {totals['modtac']:,}; matches the documented "
             f"derivation in README.md")


def test_8_evaluation_identities_via_cli_assert(tmp_path, capsys):
    corpus = str(tmp_path / "corpus")
    models = str(tmp_path / "models")
    runs = str(tmp_path / "runs")
    tiny = {"model_dim": 16, "n_heads": 2, "ff_dim": 32,
            "n_blocks": 1, "tac_hidden": 8}
    config = str(tmp_path / "pipe.yaml")
    with open(config, "w", encoding="utf-8") as fh:
        yaml.safe_dump({
            "synth": {"out_dir": corpus, "base_seed": 31,
                      "train_utterances": 8,
                      "dev_positives_per_condition": 1, "dev_negatives": 2,
                      "eval_positives_per_condition": 1,
                      "negative_hours": 18.0 / 3600.0,
                      "negative_clip_seconds": 9.0},
            "train": {"corpus_dir": corpus, "out_dir": models, "epochs": 1,
                      "batch_size": 4, "model_overrides": tiny},
            "eval": {"corpus_dir": corpus, "models_dir": models,
                     "fp_threshold": -10.0, "target_fa_per_hour": 600.0,
                     "out_dir": runs},
        }, fh)
    fp_config = str(tmp_path / "fp.yaml")
    with open(fp_config, "w", encoding="utf-8") as fh:
        yaml.safe_dump({"train": {"corpus_dir": corpus, "out_dir": models,
                                  "variant": "firstpass", "epochs": 1,
                                  "batch_size": 4, "fp_hidden": 8,
                                  "fp_depth": 2}}, fh)
    assert cli.main(["synth", "--config", config]) == 0
    assert cli.main(["train", "--config", config]) == 0
    assert cli.main(["train", "--config", fp_config]) == 0
    rc = cli.main(["eval", "--config", config, "--assert"])
    out = capsys.readouterr().out
    names = ("frr_in_unit_interval", "overall_is_weighted_mean",
             "fa_rate_nonnegative", "det_monotone", "deterministic_rerun")
    ok = rc == 0 and "FAIL" not in out and all(n in out for n in names)
    with capsys.disabled():
        print()
        _verdict("evaluation identities", ok,
                 "eval --assert: all 5 checks pass on a freshly trained "
                 "pipeline")
