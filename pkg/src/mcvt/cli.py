"""Command-line front door for the detection pipeline.

Subcommands
    synth      render a synthetic multichannel corpus plus manifests
    train      run the training recipe for one model variant
    gradcheck  verify analytic gradients module by module
    score      write a per-utterance and per-event score table
    eval       fix an operating point and emit per-condition FRR reports
    inspect    summarize checkpoints or preset parameter counts

One YAML document feeds every subcommand through a section named after
it; command-line flags override config values.  Exit codes: 0 success,
1 usage or config error, 2 assertion or numeric-check failure, 3 I/O
failure.  Artifacts are written atomically and every subcommand is
deterministic given config plus seed.
"""

import argparse
import dataclasses
import os
import sys

import numpy as np
import yaml

from .ctc import LabelSequence, ctc_loss
from .errors import (ConfigError, EmptyInputError, InsufficientDataError,
                     ShapeError, StateError, TrainingError)
from .evalharness import (assert_identities, fix_operating_point, frr_report,
                          load_pipeline, positives_by_condition, score_corpus)
from .firstpass import FirstPassDnn
from .ndcore.checkpoint import Checkpoint
from .ndcore.gradcheck import gradcheck
from .ndcore.layers import LinearLayer, PReLU, collect_parameters
from .ndcore.tensor import add, add_const, constant, mul_const, parameter, sum_all
from .secondpass import ModelConfig, SecondPassModel, count_params
from .simcorpus import CorpusConfig, build_corpus
from .tac import ModTacBlock, MultichannelBatch, TacBlock
from .trainloop import TrainConfig, train

EXIT_OK, EXIT_USAGE, EXIT_ASSERT, EXIT_IO = 0, 1, 2, 3

GRADCHECK_MODULES = ("linear", "prelu", "tac", "modtac", "encoder", "ctc")
SPLITS = ("train", "dev", "eval", "negative")


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse would sys.exit(2) on bad flags; route that to exit code 1
    def error(self, message):
        raise _UsageError(f"{self.prog}: {message}")


# ---------------------------------------------------------------------------
# config plumbing


def load_config(path):
    """Parse the shared YAML document into {section: {key: value}}."""
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            doc = yaml.safe_load(fh)
    except OSError as err:
        raise ConfigError(f"cannot read config file: {err}")
    except yaml.YAMLError as err:
        raise ConfigError(f"malformed config file {path}: {err}")
    doc = doc or {}
    if not isinstance(doc, dict):
        raise ConfigError(f"config root must be a mapping, got {type(doc).__name__}")
    known = ("synth", "train", "gradcheck", "score", "eval", "inspect")
    for key, val in doc.items():
        if key not in known:
            raise ConfigError(f"unknown config section '{key}' (expected {known})")
        if val is None:
            doc[key] = {}
        elif not isinstance(val, dict):
            raise ConfigError(f"config section '{key}' must be a mapping")
    return doc


def _section(args, name):
    return dict(load_config(args.config).get(name, {}))


def _check_keys(cfg, section, allowed):
    unknown = sorted(set(cfg) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown keys in config section '{section}': "
                          f"{unknown} (allowed: {sorted(allowed)})")


def _dataclass_from(cls, cfg, section):
    names = [f.name for f in dataclasses.fields(cls)]
    _check_keys(cfg, section, names)
    return cls(**cfg)


def _write_atomic(path, text):
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _fmt(value):
    return f"{value:.6g}" if isinstance(value, float) else str(value)


# ---------------------------------------------------------------------------
# synth


def _synth_progress(label, k, total):
    if total and (k % 500 == 0 or k + 1 >= total):
        print(f"  synth {label}: {min(k + 1, total)}/{total}", file=sys.stderr)


def run_synth(args):
    cfg = _section(args, "synth")
    if args.out:
        cfg["out_dir"] = args.out
    if args.seed is not None:
        cfg["base_seed"] = args.seed
    splits = cfg.pop("splits", SPLITS)
    if isinstance(splits, str):
        splits = [s.strip() for s in splits.split(",") if s.strip()]
    for s in splits:
        if s not in SPLITS:
            raise ConfigError(f"unknown split '{s}' (expected subset of {SPLITS})")
    if "condition_cycle" in cfg:
        cfg["condition_cycle"] = tuple(cfg["condition_cycle"])
    corpus = _dataclass_from(CorpusConfig, cfg, "synth")
    manifests = build_corpus(corpus, splits=tuple(splits),
                             progress=_synth_progress)
    for split in splits:
        print(f"wrote {split} manifest: {manifests[split]}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# train


def _train_progress(variant, epoch, total, row):
    text = " ".join(f"{key}={_fmt(val)}" for key, val in row.items())
    print(f"  train {variant} epoch {epoch}/{total}: {text}", file=sys.stderr)


def run_train(args):
    cfg = _section(args, "train")
    if args.variant:
        cfg["variant"] = args.variant
    if args.preset:
        cfg["preset"] = args.preset
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.out:
        cfg["out_dir"] = args.out
    if "lr_decay_epochs" in cfg:
        cfg["lr_decay_epochs"] = tuple(cfg["lr_decay_epochs"])
    config = _dataclass_from(TrainConfig, cfg, "train")
    result = train(config, progress=_train_progress)
    print(f"checkpoint: {result.checkpoint_path}")
    print(f"metrics: {result.metrics_path}")
    print(f"best epoch {result.best_epoch}, dev loss {result.best_dev_loss:.6g}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# gradcheck


def gradcheck_module(name, seed=0, corrupt=False, tolerance=1e-6):
    """Finite-difference report for one module's analytic gradients.

    With corrupt=True the loss gains a term whose gradient the tape
    cannot see, so a healthy checker must report failure.
    """
    rng = np.random.default_rng([seed, 23])
    if name == "linear":
        layer = LinearLayer(5, 4, rng=rng, dtype=np.float64)
        x = constant(rng.standard_normal((3, 5)))
        proj = rng.standard_normal((3, 4))
        params = collect_parameters("linear", layer)

        def forward():
            return sum_all(mul_const(layer(x), proj))
    elif name == "prelu":
        act = PReLU(6, dtype=np.float64)
        # keep inputs away from the kink at 0 so central differences hold
        signs = np.where(rng.random((4, 6)) < 0.5, -1.0, 1.0)
        x = constant(signs * rng.uniform(0.2, 1.0, (4, 6)))
        proj = rng.standard_normal((4, 6))
        params = collect_parameters("prelu", act)

        def forward():
            return sum_all(mul_const(act(x), proj))
    elif name in ("tac", "modtac"):
        make = TacBlock if name == "tac" else ModTacBlock
        block = make(feat_dim=6, hidden=5, rng=rng, dtype=np.float64)
        channels = [constant(rng.standard_normal((4, 6))) for _ in range(3)]
        selected = constant(rng.standard_normal((4, 6)))
        projs = [rng.standard_normal((4, 6)) for _ in range(4)]
        params = collect_parameters(name, block)

        def forward():
            if name == "tac":
                outs = block(channels)
            else:
                outs, out_sc = block(channels, selected)
                outs = outs + [out_sc]
            total = sum_all(mul_const(outs[0], projs[0]))
            for out, proj in zip(outs[1:], projs[1:]):
                total = add(total, sum_all(mul_const(out, proj)))
            return total
    elif name == "encoder":
        mc = ModelConfig.preset("desk", input_dim=10, model_dim=8, n_heads=2,
                                ff_dim=16, n_blocks=1, tac_hidden=6, n_out=7,
                                n_channels=3)
        model = SecondPassModel("modtac", config=mc, rng=rng, dtype=np.float64)
        batch = MultichannelBatch(
            [constant(rng.standard_normal((5, 10))) for _ in range(3)],
            selected=constant(rng.standard_normal((5, 10))), selected_index=0)
        proj = rng.standard_normal((5, 7))
        params = collect_parameters("encoder", model)

        def forward():
            return sum_all(mul_const(model.encode(batch), proj))
    elif name == "ctc":
        logits = parameter(rng.standard_normal((6, 5)), name="logits")
        labels = LabelSequence((0, 2), n_classes=5, blank=4)
        params = {"ctc.logits": logits}

        def forward():
            return ctc_loss(logits, labels, blank=4)
    else:
        raise ConfigError(f"unknown gradcheck module '{name}' "
                          f"(expected one of {GRADCHECK_MODULES})")

    if corrupt:
        clean = forward
        leak = next(iter(params.values()))

        def forward():
            # constant() hides this term from the tape, so the analytic
            # gradient of the first element is off by 0.01
            return add_const(clean(), 0.01 * float(leak.data.reshape(-1)[0]))

    return gradcheck(forward, params, tolerance=tolerance)


def run_gradcheck(args):
    cfg = _section(args, "gradcheck")
    _check_keys(cfg, "gradcheck", ("module", "seed", "tolerance"))
    module = args.module or cfg.get("module")
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    tolerance = float(cfg.get("tolerance", 1e-6))
    names = GRADCHECK_MODULES if module is None else (module,)
    failed = 0
    for name in names:
        report = gradcheck_module(name, seed=seed, tolerance=tolerance)
        state = "PASS" if report.passed else "FAIL"
        print(f"{name}: {state} (worst rel err {report.worst:.3e}, "
              f"tol {tolerance:g})")
        for pname, err in sorted(report.max_rel_err.items()):
            print(f"    {pname}: {err:.3e}")
        failed += 0 if report.passed else 1
    print(f"gradcheck: {len(names) - failed}/{len(names)} modules passed")
    return EXIT_OK if failed == 0 else EXIT_ASSERT


# ---------------------------------------------------------------------------
# score / eval


_PIPELINE_KEYS = ("variant", "models_dir", "fp_checkpoint", "sp_checkpoint",
                  "fp_threshold", "corpus_dir")


def _pipeline_from(cfg, args):
    variant = args.variant or cfg.get("variant", "modtac")
    models_dir = cfg.get("models_dir", "runs")
    fp_path = cfg.get("fp_checkpoint") or os.path.join(models_dir, "firstpass.ckpt")
    sp_path = cfg.get("sp_checkpoint") or os.path.join(models_dir, f"{variant}.ckpt")
    pipeline = load_pipeline(fp_path, sp_path,
                             fp_threshold=float(cfg.get("fp_threshold", 0.0)))
    if pipeline.variant != variant:
        raise ConfigError(f"checkpoint variant '{pipeline.variant}' does not "
                          f"match requested variant '{variant}'")
    return pipeline


def _corpus_dir(cfg, section):
    corpus_dir = cfg.get("corpus_dir")
    if not corpus_dir:
        raise ConfigError(f"config section '{section}' needs corpus_dir")
    return corpus_dir


def _score_progress(split, k, total):
    if k % 25 == 0 or k == total:
        print(f"  scoring {split}: {k}/{total}", file=sys.stderr)


def run_score(args):
    cfg = _section(args, "score")
    _check_keys(cfg, "score", _PIPELINE_KEYS + ("split", "limit", "out_dir"))
    pipeline = _pipeline_from(cfg, args)
    corpus_dir = _corpus_dir(cfg, "score")
    split = cfg.get("split", "eval")
    limit = cfg.get("limit")
    out_dir = args.out or cfg.get("out_dir", "runs")
    scores = score_corpus(pipeline, corpus_dir, split=split,
                          limit=None if limit is None else int(limit),
                          progress=_score_progress)
    for err in scores.errors:
        print(f"warning: {err}", file=sys.stderr)
    if not scores.positives and not scores.events:
        print("error: no records could be scored", file=sys.stderr)
        return EXIT_IO
    lines = ["kind\tutt_id\tcondition\tchannel\tfp_score\tsp_score"
             "\tforwarded\ttime_s"]
    for p in scores.positives:
        lines.append(f"positive\t{p.utt_id}\t{p.condition}"
                     f"\t{p.selected_channel}\t{p.fp_scores[p.selected_channel]:.6g}"
                     f"\t{p.score:.6g}\t{1 if p.forwarded else 0}\t")
    for e in scores.events:
        lines.append(f"event\t{e.utt_id}\t\t{e.channel}\t{e.fp_score:.6g}"
                     f"\t{e.score:.6g}\t1\t{e.time_s:.3f}")
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, f"scores_{pipeline.variant}_{split}.tsv")
    _write_atomic(path, "\n".join(lines) + "\n")
    print(f"score table: {path}")
    print(f"{len(scores.positives)} positives, {len(scores.events)} events "
          f"over {scores.negative_hours:.3f} h of negative audio")
    return EXIT_OK


def run_eval(args):
    cfg = _section(args, "eval")
    _check_keys(cfg, "eval", _PIPELINE_KEYS + (
        "target_fa_per_hour", "positive_split", "negative_split",
        "positive_limit", "negative_limit", "det_points",
        "assert_rerun_records", "out_dir"))
    pipeline = _pipeline_from(cfg, args)
    corpus_dir = _corpus_dir(cfg, "eval")
    target = float(cfg.get("target_fa_per_hour", 0.5))
    positive_split = cfg.get("positive_split", "eval")
    negative_split = cfg.get("negative_split", "negative")
    positive_limit = cfg.get("positive_limit")
    negative_limit = cfg.get("negative_limit")
    out_dir = args.out or cfg.get("out_dir", "runs")

    positives = score_corpus(pipeline, corpus_dir, split=positive_split,
                             limit=positive_limit, progress=_score_progress)
    negatives = score_corpus(pipeline, corpus_dir, split=negative_split,
                             limit=negative_limit, progress=_score_progress)
    for err in positives.errors + negatives.errors:
        print(f"warning: {err}", file=sys.stderr)

    event_scores = [e.score for e in negatives.events]
    op = fix_operating_point(event_scores, negatives.negative_hours, target,
                             source=f"{negative_split} split at {target}/h")
    report = frr_report(positives_by_condition(positives.positives), op,
                        negative_scores=event_scores,
                        hours=negatives.negative_hours,
                        det_points=int(cfg.get("det_points", 200)))
    table_path, det_path = report.write(out_dir, f"eval_{pipeline.variant}")
    print(report.to_table(), end="")
    print(f"report: {table_path}")
    print(f"det: {det_path}")

    if not args.assert_:
        return EXIT_OK
    checks = list(assert_identities(report))
    rerun = int(cfg.get("assert_rerun_records", 8))
    pos_limit = rerun if positive_limit is None else min(rerun, positive_limit)
    neg_limit = 2 if negative_limit is None else min(2, negative_limit)
    pos_again = score_corpus(pipeline, corpus_dir, split=positive_split,
                             limit=pos_limit)
    neg_again = score_corpus(pipeline, corpus_dir, split=negative_split,
                             limit=neg_limit)
    ok = (pos_again.positives == positives.positives[:len(pos_again.positives)]
          and neg_again.events == negatives.events[:len(neg_again.events)])
    checks.append(("deterministic_rerun", ok,
                   f"{len(pos_again.positives)} positives, "
                   f"{len(neg_again.events)} events rescored"))
    failures = 0
    for name, passed, detail in checks:
        print(f"{'PASS' if passed else 'FAIL'} {name}: {detail}")
        failures += 0 if passed else 1
    return EXIT_OK if failures == 0 else EXIT_ASSERT


# ---------------------------------------------------------------------------
# inspect


def _inspect_checkpoint(path):
    ckpt = Checkpoint.load(path)
    model_entries = {k: v for k, v in ckpt.entries.items()
                     if not k.startswith("norm.")}
    total = sum(v.size for v in model_entries.values())
    lines = [f"{path}", f"  tag: {ckpt.tag}"]
    for key in sorted(ckpt.meta):
        lines.append(f"  {key} = {ckpt.meta[key]}")
    lines.append(f"  tensors: {len(ckpt.entries)} "
                 f"({len(model_entries)} model, "
                 f"{len(ckpt.entries) - len(model_entries)} stats)")
    lines.append(f"  parameters: {total:,}")
    return "\n".join(lines)


def preset_param_counts(preset, variants=("baseline", "tac", "modtac")):
    """Total (and per-group) parameter counts built from zero-filled models."""
    rows = {}
    for variant in variants:
        model = SecondPassModel(variant, config=ModelConfig.preset(preset))
        rows[variant] = count_params(model)
    return rows


def run_inspect(args):
    cfg = _section(args, "inspect")
    _check_keys(cfg, "inspect", ("preset", "variant"))
    if args.paths:
        for path in args.paths:
            print(_inspect_checkpoint(path))
        return EXIT_OK
    preset = args.preset or cfg.get("preset", "paper")
    variant = args.variant or cfg.get("variant")
    variants = (variant,) if variant else ("baseline", "tac", "modtac")
    fp_counts = count_params(FirstPassDnn())
    print(f"first-pass dnn: {fp_counts['total']:,} parameters")
    for name, counts in preset_param_counts(preset, variants).items():
        groups = ", ".join(f"{g}={counts[g]:,}" for g in sorted(counts)
                           if g != "total")
        print(f"second-pass {name} ({preset} preset): "
              f"{counts['total']:,} parameters ({groups})")
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point


def _build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH",
                        help="shared YAML config with per-subcommand sections")
    common.add_argument("--seed", type=int, metavar="N",
                        help="override the section's random seed")
    common.add_argument("--variant", choices=("baseline", "tac", "modtac"),
                        help="second-pass model variant")
    common.add_argument("--preset", choices=("desk", "paper"),
                        help="architecture size preset")
    common.add_argument("--out", metavar="DIR",
                        help="override the section's output directory")
    common.add_argument("--assert", dest="assert_", action="store_true",
                        help="verify consistency identities; exit 2 on failure")

    parser = _Parser(prog="mcvt",
                     description="two-stage multichannel voice trigger tools")
    sub = parser.add_subparsers(dest="command", metavar="SUBCOMMAND")
    entries = (
        ("synth", run_synth, "render a synthetic multichannel corpus"),
        ("train", run_train, "train one model variant on a corpus"),
        ("gradcheck", run_gradcheck, "verify analytic gradients"),
        ("score", run_score, "emit a per-utterance score table"),
        ("eval", run_eval, "fix an operating point and report FRR"),
        ("inspect", run_inspect, "summarize checkpoints and presets"),
    )
    for name, func, help_text in entries:
        p = sub.add_parser(name, parents=[common], help=help_text)
        p.set_defaults(func=func)
        if name == "gradcheck":
            p.add_argument("--module", choices=GRADCHECK_MODULES,
                           help="check a single module instead of all")
        if name == "inspect":
            p.add_argument("paths", nargs="*", metavar="CKPT",
                           help="checkpoint files to summarize")
    return parser


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "func", None) is None:
            parser.print_usage(sys.stderr)
            return EXIT_USAGE
        return args.func(args)
    except _UsageError as err:
        print(str(err), file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, ShapeError, EmptyInputError, StateError,
            InsufficientDataError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except TrainingError as err:
        print(f"training failed: {err}", file=sys.stderr)
        return EXIT_ASSERT
    except OSError as err:
        print(f"i/o error: {err}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
