"""Training orchestration: Adam with staged learning-rate decay, CTC or
frame cross-entropy objectives, gradient accumulation, best-dev
checkpointing, and per-epoch tab-separated metrics.

The detector variants share one recipe: learning rate 5e-4 for epochs
1-10, then divided by 4 at each decay epoch (11, 17, 23 by default)
until epoch 28.  The second pass trains with CTC over full phoneme
transcripts; the first pass trains with cross-entropy against the
frame labels the synthesizer wrote next to each training clip.  During
training the pseudo-selected channel is the enhanced channel 0.
"""

import os
import time
from dataclasses import dataclass, field, fields

import numpy as np

from .ctc import LabelSequence, ctc_forward_logprob, ctc_loss, keyword_score
from .errors import ConfigError, InsufficientDataError, TrainingError
from .features import (FeatureConfig, apply_norm, compute_norm, extract_logmel,
                       load_wav, stack_context)
from .firstpass import (FirstPassDnn, KeywordHmm, dnn_posteriors,
                        hmm_decode_stream, save_first_pass)
from .ndcore.layers import collect_parameters
from .ndcore.optim import Adam
from .ndcore.tensor import constant, softmax_cross_entropy
from .secondpass import ModelConfig, SecondPassModel, encode, save_second_pass
from .simcorpus import KEYWORD_PHONEMES
from .simcorpus import manifest_path as corpus_manifest_path
from .simcorpus import read_manifest
from .tac import MultichannelBatch

TRAIN_VARIANTS = ("baseline", "tac", "modtac", "firstpass")

BASE_LR = 5e-4
LR_DECAY_EPOCHS = (11, 17, 23)
LR_DECAY_FACTOR = 4.0
TOTAL_EPOCHS = 28

METRIC_COLUMNS = ("epoch", "lr", "train_loss", "dev_loss", "dev_gap",
                  "dev_gap_stderr", "skipped", "seconds")


def lr_at_epoch(epoch, base_lr=BASE_LR, decay_epochs=LR_DECAY_EPOCHS,
                factor=LR_DECAY_FACTOR):
    """Pure schedule: base LR, divided by `factor` at each decay epoch."""
    if epoch < 1:
        raise ConfigError("epochs are 1-based")
    lr = float(base_lr)
    for d in sorted(decay_epochs):
        if epoch >= d:
            lr /= factor
    return lr


@dataclass
class TrainConfig:
    """Every knob of one training run; `describe()` prints them all."""

    variant: str = "modtac"
    corpus_dir: str = "corpus"
    out_dir: str = "runs"
    preset: str = "desk"
    epochs: int = TOTAL_EPOCHS
    base_lr: float = BASE_LR
    lr_decay_factor: float = LR_DECAY_FACTOR
    lr_decay_epochs: tuple = LR_DECAY_EPOCHS
    batch_size: int = 32
    grad_accum_shards: int = 1
    seed: int = 0
    dtype: str = "float32"
    fp_hidden: int = 64
    fp_depth: int = 5
    max_train_utterances: int = None
    max_dev_utterances: int = None
    init_from: str = None
    model_overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.variant not in TRAIN_VARIANTS:
            raise ConfigError(f"variant '{self.variant}' not in {TRAIN_VARIANTS}")
        if self.epochs < 1 or self.batch_size < 1 or self.grad_accum_shards < 1:
            raise ConfigError("epochs, batch_size and grad_accum_shards must be >= 1")
        if self.batch_size % self.grad_accum_shards != 0:
            raise ConfigError("grad_accum_shards must divide batch_size")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError("dtype must be float32 or float64")

    def describe(self):
        lines = ["training configuration"]
        for f in fields(self):
            lines.append(f"  {f.name} = {getattr(self, f.name)}")
        lines.append("  lr table = " + ", ".join(
            f"{e}:{lr_at_epoch(e, self.base_lr, self.lr_decay_epochs, self.lr_decay_factor):g}"
            for e in range(1, self.epochs + 1)))
        return "\n".join(lines) + "\n"


@dataclass
class LoadedUtterance:
    """Raw per-channel log-mel features plus training targets."""

    logmels: list                # 4 arrays, frames x n_mels
    alignment: np.ndarray        # frame class ids, or None
    transcript: tuple
    condition: str
    keyword_flag: bool
    pseudo_selected: int = 0

    @property
    def num_frames(self):
        return self.logmels[0].shape[0]


def load_split(corpus_dir, split, feat_config=None, limit=None):
    """Read one manifest and cache per-channel log-mels in memory."""
    cfg = feat_config or FeatureConfig()
    rows = read_manifest(corpus_manifest_path(corpus_dir, split))
    if limit is not None:
        rows = rows[:limit]
    out = []
    for row in rows:
        logmels = [extract_logmel(load_wav(os.path.join(corpus_dir, rel)), cfg)
                   .astype(np.float32) for rel in row.channel_paths]
        alignment = None
        if row.alignment_path:
            alignment = np.load(os.path.join(corpus_dir, row.alignment_path))
            alignment = alignment[:logmels[0].shape[0]]
        out.append(LoadedUtterance(logmels=logmels, alignment=alignment,
                                   transcript=row.transcript,
                                   condition=row.condition,
                                   keyword_flag=row.keyword_flag,
                                   pseudo_selected=row.pseudo_selected))
    if not out:
        raise InsufficientDataError(f"split '{split}' in {corpus_dir} is empty")
    return out


def stacked_channels(utt, norm, feat_config, dtype=np.float32):
    """Context-stacked, normalized inputs for each channel of one record."""
    return [stack_context(apply_norm(m, norm), feat_config.left_context,
                          feat_config.right_context).astype(dtype)
            for m in utt.logmels]


def second_pass_inputs(variant, stacked, selected_index):
    if variant == "baseline":
        return stacked[selected_index]
    if variant in ("tac", "concat"):
        return MultichannelBatch(channels=stacked)
    if variant == "modtac":
        return MultichannelBatch(channels=stacked,
                                 selected=stacked[selected_index],
                                 selected_index=selected_index)
    raise ConfigError(f"unknown variant '{variant}'")


# ---------------------------------------------------------------------------
# batch gradients


def firstpass_batch_gradients(model, stacked_list, label_list, n_shards=1):
    """Mean frame cross-entropy over the batch; grads left on the params.

    Shards are processed as separate matrices whose backward passes
    accumulate, weighted so the total equals the full-batch mean.
    """
    params = collect_parameters("fp", model)
    for p in params.values():
        p.grad = None
    total_frames = sum(x.shape[0] for x in stacked_list)
    shards = np.array_split(np.arange(len(stacked_list)), n_shards)
    total_loss = 0.0
    for shard in shards:
        if shard.size == 0:
            continue
        xs = np.concatenate([stacked_list[i] for i in shard], axis=0)
        ys = np.concatenate([label_list[i] for i in shard], axis=0)
        loss = softmax_cross_entropy(model.logits(constant(xs)), ys)
        weight = xs.shape[0] / total_frames
        loss.backward(np.asarray(weight, dtype=loss.data.dtype))
        total_loss += float(loss.data) * weight
    return total_loss, params


def secondpass_batch_gradients(model, inputs_list, transcript_list,
                               n_shards=1, rng=None, training=True):
    """Mean per-frame CTC loss over the batch; grads left on the params.

    Infeasible alignments (loss +Inf) are skipped, not trained on;
    returns (mean loss over used utterances, params, skipped count).
    """
    params = collect_parameters("sp", model)
    for p in params.values():
        p.grad = None
    n_out = model.config.n_out
    losses = []
    pending = []
    skipped = 0
    for inputs, transcript in zip(inputs_list, transcript_list):
        out = model.encode(inputs, training=training, rng=rng)
        labels = LabelSequence(tuple(transcript), n_classes=n_out,
                               blank=n_out - 1)
        loss = ctc_loss(out, labels, blank=n_out - 1)
        per_frame = float(loss.data) / out.data.shape[0]
        if np.isinf(per_frame):
            skipped += 1
            continue
        losses.append(per_frame)
        pending.append((loss, out.data.shape[0]))
    n_used = len(pending)
    for loss, n_frames in pending:
        loss.backward(np.asarray(1.0 / (n_frames * n_used),
                                 dtype=loss.data.dtype))
    mean_loss = float(np.mean(losses)) if losses else float("nan")
    return mean_loss, params, skipped


# ---------------------------------------------------------------------------
# dev metrics


@dataclass
class DevMetrics:
    loss: float
    pos_mean: float
    neg_mean: float
    gap: float
    gap_stderr: float
    n_pos: int
    n_neg: int


def _gap_stats(pos, neg):
    pos = np.asarray(pos, dtype=np.float64)
    neg = np.asarray(neg, dtype=np.float64)
    if pos.size == 0 or neg.size == 0:
        nan = float("nan")
        return nan, nan, nan, nan
    se = 0.0
    if pos.size > 1:
        se += pos.var(ddof=1) / pos.size
    if neg.size > 1:
        se += neg.var(ddof=1) / neg.size
    return (float(pos.mean()), float(neg.mean()),
            float(pos.mean() - neg.mean()), float(np.sqrt(se)))


def evaluate_dev(variant, model, dataset, norm, feat_config,
                 keyword=KEYWORD_PHONEMES, hmm=None):
    """Dev loss plus keyword-score separation between positives and negatives."""
    pos_scores, neg_scores, losses = [], [], []
    if variant == "firstpass":
        hmm = hmm or KeywordHmm(keyword)
    for utt in dataset:
        stacked = stacked_channels(utt, norm, feat_config, dtype=np.float64)
        if variant == "firstpass":
            x = stacked[utt.pseudo_selected]
            score = hmm_decode_stream(hmm, dnn_posteriors(model, x)).score
            if utt.alignment is not None:
                n = min(x.shape[0], utt.alignment.size)
                ce = softmax_cross_entropy(model.logits(constant(x[:n])),
                                           utt.alignment[:n].astype(np.int64))
                losses.append(float(ce.data))
        else:
            inputs = second_pass_inputs(variant, stacked, utt.pseudo_selected)
            out = encode(model, inputs)
            n_out = model.config.n_out
            score = keyword_score(out, keyword, blank=n_out - 1)
            labels = LabelSequence(tuple(utt.transcript), n_classes=n_out,
                                   blank=n_out - 1)
            lp = ctc_forward_logprob(out, labels, blank=n_out - 1)
            per_frame = -lp / out.shape[0]
            if np.isfinite(per_frame):
                losses.append(per_frame)
        (pos_scores if utt.keyword_flag else neg_scores).append(score)
    pos_mean, neg_mean, gap, stderr = _gap_stats(pos_scores, neg_scores)
    return DevMetrics(loss=float(np.mean(losses)) if losses else float("nan"),
                      pos_mean=pos_mean, neg_mean=neg_mean, gap=gap,
                      gap_stderr=stderr, n_pos=len(pos_scores),
                      n_neg=len(neg_scores))


# ---------------------------------------------------------------------------
# training


@dataclass
class TrainResult:
    variant: str
    checkpoint_path: str
    metrics_path: str
    config_path: str
    best_epoch: int
    best_dev_loss: float
    history: list


def _param_prefix(variant):
    return "fp.dnn" if variant == "firstpass" else "sp"


def _build_model(config, feat_config, rng):
    dtype = np.dtype(config.dtype)
    if config.variant == "firstpass":
        return FirstPassDnn(input_dim=feat_config.stacked_dim,
                            hidden=config.fp_hidden, depth=config.fp_depth,
                            rng=rng, dtype=dtype)
    overrides = dict(config.model_overrides)
    overrides.setdefault("input_dim", feat_config.stacked_dim)
    mc = ModelConfig.preset(config.preset, **overrides)
    return SecondPassModel(config.variant, config=mc, rng=rng, dtype=dtype)


def _save(config, model, norm, feat_config, path):
    if config.variant == "firstpass":
        save_first_pass(path, model, norm[0], norm[1], feat_config)
    else:
        save_second_pass(path, model, norm[0], norm[1], feat_config)


def _load_weights_from(path, config, model):
    from .ndcore.checkpoint import Checkpoint
    ckpt = Checkpoint.load(path)
    for name, p in collect_parameters(_param_prefix(config.variant), model).items():
        if name not in ckpt.entries:
            raise ConfigError(f"init checkpoint missing '{name}'")
        if ckpt.entries[name].shape != p.data.shape:
            raise ConfigError(f"init checkpoint shape mismatch for '{name}'")
        p.data = ckpt.entries[name].astype(p.data.dtype)


def train(config, progress=None):
    """Run the full recipe; returns paths to checkpoint, metrics and config."""
    os.makedirs(config.out_dir, exist_ok=True)
    feat_config = FeatureConfig()
    rng = np.random.default_rng([config.seed, 5])

    train_set = load_split(config.corpus_dir, "train", feat_config,
                           limit=config.max_train_utterances)
    dev_set = load_split(config.corpus_dir, "dev", feat_config,
                         limit=config.max_dev_utterances)
    norm = compute_norm([u.logmels[0] for u in train_set])

    model = _build_model(config, feat_config, rng)
    if config.init_from:
        _load_weights_from(config.init_from, config, model)
    params = collect_parameters(_param_prefix(config.variant), model)
    optimizer = Adam(params, lr=config.base_lr)

    dtype = np.dtype(config.dtype)
    cache = [stacked_channels(u, norm, feat_config, dtype=dtype)
             for u in train_set]
    labels = []
    if config.variant == "firstpass":
        for i, u in enumerate(train_set):
            if u.alignment is None:
                raise ConfigError("first-pass training needs alignment sidecars")
            n = min(cache[i][0].shape[0], u.alignment.size)
            labels.append(u.alignment[:n].astype(np.int64))
            cache[i] = [c[:n] for c in cache[i]]

    ckpt_path = os.path.join(config.out_dir, f"{config.variant}.ckpt")
    metrics_path = os.path.join(config.out_dir, f"{config.variant}_metrics.tsv")
    config_path = os.path.join(config.out_dir, f"{config.variant}_config.txt")
    tmp = f"{config_path}.tmp.{os.getpid()}"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(config.describe())
    os.replace(tmp, config_path)

    last_good = {name: p.data.copy() for name, p in params.items()}

    def abort(reason):
        for name, p in params.items():
            p.data = last_good[name]
        _save(config, model, norm, feat_config, ckpt_path)
        raise TrainingError(f"{reason}; last good checkpoint saved to {ckpt_path}")

    best_dev = np.inf
    best_epoch = 0
    history = []
    with open(metrics_path, "w", encoding="utf-8") as mfh:
        mfh.write("\t".join(METRIC_COLUMNS) + "\n")
        for epoch in range(1, config.epochs + 1):
            t0 = time.monotonic()
            optimizer.lr = lr_at_epoch(epoch, config.base_lr,
                                       config.lr_decay_epochs,
                                       config.lr_decay_factor)
            order = rng.permutation(len(train_set))
            epoch_losses = []
            skipped = 0
            for start in range(0, len(order), config.batch_size):
                idx = order[start:start + config.batch_size]
                batch_skipped = 0
                if config.variant == "firstpass":
                    loss, _ = firstpass_batch_gradients(
                        model, [cache[i][train_set[i].pseudo_selected] for i in idx],
                        [labels[i] for i in idx], config.grad_accum_shards)
                else:
                    inputs = [second_pass_inputs(config.variant, cache[i],
                                                 train_set[i].pseudo_selected)
                              for i in idx]
                    loss, _, batch_skipped = secondpass_batch_gradients(
                        model, inputs, [train_set[i].transcript for i in idx],
                        config.grad_accum_shards, rng=rng, training=True)
                    skipped += batch_skipped
                if not np.isfinite(loss):
                    if batch_skipped == len(idx):
                        continue  # no alignable utterance in this batch
                    abort(f"non-finite loss at epoch {epoch}")
                try:
                    optimizer.step()
                except TrainingError as err:
                    abort(str(err))
                optimizer.zero_grad()
                for name, p in params.items():
                    last_good[name] = p.data.copy()
                epoch_losses.append(loss)

            dev = evaluate_dev(config.variant, model, dev_set, norm, feat_config)
            if not np.isfinite(dev.loss):
                abort(f"non-finite dev loss at epoch {epoch}")
            if dev.loss < best_dev:
                best_dev = dev.loss
                best_epoch = epoch
                _save(config, model, norm, feat_config, ckpt_path)
            row = {"epoch": epoch, "lr": optimizer.lr,
                   "train_loss": float(np.mean(epoch_losses)) if epoch_losses
                   else float("nan"),
                   "dev_loss": dev.loss, "dev_gap": dev.gap,
                   "dev_gap_stderr": dev.gap_stderr, "skipped": skipped,
                   "seconds": time.monotonic() - t0}
            history.append(row)
            mfh.write("\t".join(_format_metric(row[c]) for c in METRIC_COLUMNS)
                      + "\n")
            mfh.flush()
            if progress:
                progress(config.variant, epoch, config.epochs, row)

    return TrainResult(variant=config.variant, checkpoint_path=ckpt_path,
                       metrics_path=metrics_path, config_path=config_path,
                       best_epoch=best_epoch, best_dev_loss=float(best_dev),
                       history=history)


def _format_metric(value):
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def read_metrics(path):
    """Parse a metrics TSV back into a list of per-epoch dicts."""
    rows = []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split("\t")
        if header != list(METRIC_COLUMNS):
            raise ConfigError(f"unrecognized metrics header in {path}")
        for line in fh:
            parts = line.rstrip("\n").split("\t")
            row = {}
            for key, val in zip(header, parts):
                row[key] = int(val) if key in ("epoch", "skipped") else float(val)
            rows.append(row)
    return rows
