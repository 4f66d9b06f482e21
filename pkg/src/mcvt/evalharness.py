"""End-to-end evaluation: two-stage scoring over a corpus, operating
points fixed from negative audio, per-condition FRR reports with DET
sweeps, and a paired bootstrap for comparing detectors.

An alarm fires when a score is >= the threshold.  Negative audio is
scanned by running the first-pass decoder over every channel in
parallel; whenever any channel's running score crosses the forward
threshold, the best-scoring window within a short grace period is cut
out, scored by the second pass, and the decoders restart after it.
Candidate events closer than the de-duplication window keep only the
highest-scoring one, which makes the false-alarm count a monotone
function of the threshold.
"""

import os
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, InsufficientDataError, ShapeError
from .features import FeatureConfig, apply_norm, extract_logmel, load_wav, stack_context
from .firstpass import KeywordHmm, StreamingDecoder, dnn_posteriors, load_first_pass
from .secondpass import encode, load_second_pass
from .simcorpus import KEYWORD_PHONEMES
from .simcorpus import manifest_path as corpus_manifest_path
from .simcorpus import read_manifest
from .ctc import keyword_score
from .trainloop import second_pass_inputs

DEDUP_SECONDS = 2.0
SCAN_GRACE_FRAMES = 20
SEGMENT_PAD_FRAMES = 10


@dataclass
class OperatingPoint:
    """A second-pass threshold plus the false-alarm rate measured at it."""

    threshold: float
    fa_per_hour: float
    source: str = ""

    def __post_init__(self):
        if self.fa_per_hour < 0:
            raise ConfigError("fa_per_hour must be >= 0")


@dataclass
class ScoredPositive:
    utt_id: str
    condition: str
    score: float               # second-pass score, -inf when never forwarded
    fp_scores: tuple           # per-channel first-pass scores
    selected_channel: int
    segment: tuple             # frame span on the selected channel
    forwarded: bool


@dataclass
class NegativeEvent:
    utt_id: str
    time_s: float              # clip-relative peak time
    score: float               # second-pass score
    fp_score: float
    channel: int


@dataclass
class CorpusScores:
    positives: list
    events: list
    negative_hours: float
    errors: list


@dataclass
class EvalReport:
    """Per-condition false-reject rates at one operating point."""

    threshold: float
    per_condition: dict        # condition -> FRR in [0, 1]
    counts: dict               # condition -> positive count
    overall_frr: float
    achieved_fa_per_hour: float
    det: list                  # (threshold, frr, fa_per_hour), threshold asc

    def to_table(self):
        lines = ["condition\tfrr\tpositives"]
        for cond in sorted(self.per_condition):
            lines.append(f"{cond}\t{self.per_condition[cond]:.4f}"
                         f"\t{self.counts[cond]}")
        lines.append(f"overall\t{self.overall_frr:.4f}\t{sum(self.counts.values())}")
        lines.append(f"# threshold = {self.threshold:.6g}")
        lines.append(f"# achieved_fa_per_hour = {self.achieved_fa_per_hour:.6g}")
        return "\n".join(lines) + "\n"

    def det_csv(self):
        lines = ["threshold,frr,fa_per_hour"]
        for threshold, frr, fa in self.det:
            lines.append(f"{threshold:.9g},{frr:.9g},{fa:.9g}")
        return "\n".join(lines) + "\n"

    def write(self, out_dir, stem):
        os.makedirs(out_dir, exist_ok=True)
        for name, text in ((f"{stem}.tsv", self.to_table()),
                           (f"{stem}_det.csv", self.det_csv())):
            path = os.path.join(out_dir, name)
            tmp = f"{path}.tmp.{os.getpid()}"
            with open(tmp, "w", encoding="utf-8") as fh:
                fh.write(text)
            os.replace(tmp, path)
        return (os.path.join(out_dir, f"{stem}.tsv"),
                os.path.join(out_dir, f"{stem}_det.csv"))


# ---------------------------------------------------------------------------
# pipeline


@dataclass
class Pipeline:
    """Both trained stages plus everything needed to run them on audio."""

    fp_model: object
    fp_norm: tuple
    sp_model: object
    sp_norm: tuple
    feat_config: FeatureConfig
    hmm: KeywordHmm = None
    keyword: tuple = KEYWORD_PHONEMES
    fp_threshold: float = 0.0
    dedup_seconds: float = DEDUP_SECONDS
    segment_pad: int = SEGMENT_PAD_FRAMES

    def __post_init__(self):
        if self.hmm is None:
            self.hmm = KeywordHmm(self.keyword)

    @property
    def variant(self):
        return self.sp_model.variant

    @property
    def frame_seconds(self):
        return self.feat_config.hop_ms / 1000.0


def load_pipeline(fp_path, sp_path, keyword=KEYWORD_PHONEMES,
                  fp_threshold=0.0, **kw):
    fp_model, fp_mean, fp_std, fp_cfg = load_first_pass(fp_path)
    sp_model, sp_mean, sp_std, sp_cfg = load_second_pass(sp_path)
    if fp_cfg.stacked_dim != sp_cfg.stacked_dim:
        raise ConfigError("first- and second-pass feature configs disagree")
    return Pipeline(fp_model=fp_model, fp_norm=(fp_mean, fp_std),
                    sp_model=sp_model, sp_norm=(sp_mean, sp_std),
                    feat_config=fp_cfg, keyword=keyword,
                    fp_threshold=fp_threshold, **kw)


def _stacked(pipeline, logmels, norm):
    cfg = pipeline.feat_config
    return [stack_context(apply_norm(m, norm), cfg.left_context,
                          cfg.right_context) for m in logmels]


def _second_pass_window(pipeline, sp_stacked, segment, selected):
    lo = max(0, segment[0] - pipeline.segment_pad)
    hi = min(sp_stacked[0].shape[0], segment[1] + 1 + pipeline.segment_pad)
    if hi <= lo:
        raise ShapeError(f"empty second-pass window {segment}")
    window = [c[lo:hi] for c in sp_stacked]
    inputs = second_pass_inputs(pipeline.variant, window, selected)
    out = encode(pipeline.sp_model, inputs)
    n_out = pipeline.sp_model.config.n_out
    return keyword_score(out, pipeline.keyword, blank=n_out - 1)


def score_positive(pipeline, logmels, utt_id="", condition=""):
    """Select the best channel with the first pass, rescore its window."""
    fp_stacked = _stacked(pipeline, logmels, pipeline.fp_norm)
    results = []
    for ch, x in enumerate(fp_stacked):
        posteriors = dnn_posteriors(pipeline.fp_model, x)
        decoder = StreamingDecoder(pipeline.hmm)
        result = None
        for row in posteriors:
            result = decoder.step(row)
        result.channel = ch
        results.append(result)
    scores = [r.score for r in results]
    selected = int(np.argmax(scores))
    best = results[selected]
    forwarded = best.score >= pipeline.fp_threshold and best.segment[1] > 0
    sp_score = -np.inf
    if forwarded:
        sp_stacked = _stacked(pipeline, logmels, pipeline.sp_norm)
        sp_score = _second_pass_window(pipeline, sp_stacked, best.segment,
                                       selected)
    return ScoredPositive(utt_id=utt_id, condition=condition,
                          score=float(sp_score), fp_scores=tuple(scores),
                          selected_channel=selected, segment=best.segment,
                          forwarded=forwarded)


def scan_negative(pipeline, logmels, utt_id=""):
    """Slide the first pass over long audio; second-pass every candidate."""
    fp_stacked = _stacked(pipeline, logmels, pipeline.fp_norm)
    posteriors = [dnn_posteriors(pipeline.fp_model, x) for x in fp_stacked]
    sp_stacked = None
    n_frames = posteriors[0].shape[0]
    n_ch = len(posteriors)
    decoders = [StreamingDecoder(pipeline.hmm) for _ in range(n_ch)]
    origin = 0
    events = []
    pending = None             # (score_fp, channel, segment, peak_frame)
    grace_left = 0
    t = 0
    while t < n_frames:
        results = [decoders[ch].step(posteriors[ch][t]) for ch in range(n_ch)]
        scores = [r.score for r in results]
        ch = int(np.argmax(scores))
        best = results[ch]
        if best.score >= pipeline.fp_threshold and best.segment[1] > best.segment[0]:
            cand = (best.score, ch, best.segment, t)
            # refresh the grace window only on improvement: the running
            # score plateaus after a segment completes, and a plateau
            # must not postpone the event forever
            if pending is None or cand[0] > pending[0]:
                pending = cand
                grace_left = SCAN_GRACE_FRAMES
        if pending is not None:
            grace_left -= 1
            if grace_left <= 0 or t == n_frames - 1:
                fp_score, ch, segment, peak = pending
                abs_segment = (origin + segment[0], origin + segment[1])
                if sp_stacked is None:
                    sp_stacked = _stacked(pipeline, logmels, pipeline.sp_norm)
                sp_score = _second_pass_window(pipeline, sp_stacked,
                                               abs_segment, ch)
                events.append(NegativeEvent(
                    utt_id=utt_id,
                    time_s=(origin + peak) * pipeline.frame_seconds,
                    score=float(sp_score), fp_score=float(fp_score),
                    channel=ch))
                pending = None
                origin = t + 1
                for d in decoders:
                    d.reset()
        t += 1
    return dedup_events(events, pipeline.dedup_seconds)


def dedup_events(events, window_s):
    """Keep only the highest-scoring event inside any window_s span."""
    chosen = []
    for ev in sorted(events, key=lambda e: (-e.score, e.time_s)):
        if all(abs(ev.time_s - c.time_s) >= window_s for c in chosen):
            chosen.append(ev)
    return sorted(chosen, key=lambda e: e.time_s)


def score_corpus(pipeline, corpus_dir, split="eval", limit=None, progress=None):
    """Two-stage scores for every manifest record; negatives are scanned."""
    rows = read_manifest(corpus_manifest_path(corpus_dir, split))
    if limit is not None:
        rows = rows[:limit]
    positives, events, errors = [], [], []
    hours = 0.0
    for k, row in enumerate(rows):
        try:
            logmels = [extract_logmel(load_wav(os.path.join(corpus_dir, rel)),
                                      pipeline.feat_config)
                       for rel in row.channel_paths]
        except (OSError, ConfigError) as err:
            errors.append(f"{row.utt_id}: {err}")
            continue
        if row.keyword_flag:
            positives.append(score_positive(pipeline, logmels,
                                            utt_id=row.utt_id,
                                            condition=row.condition))
        else:
            events.extend(scan_negative(pipeline, logmels, utt_id=row.utt_id))
            hours += row.duration_s / 3600.0
        if progress:
            progress(split, k + 1, len(rows))
    return CorpusScores(positives=positives, events=events,
                        negative_hours=hours, errors=errors)


# ---------------------------------------------------------------------------
# operating points and reports


def fix_operating_point(negative_scores, hours, target_fa_per_hour,
                        source=""):
    """Smallest observed threshold whose alarm count stays within target.

    An alarm is a score >= threshold, so the threshold is the K-th
    largest negative score with K = floor(target * hours); raising it
    any further would only lower the measured rate.
    """
    if hours <= 0:
        raise ConfigError("hours must be positive")
    if target_fa_per_hour < 0:
        raise ConfigError("target rate must be >= 0")
    scores = np.sort(np.asarray([s for s in negative_scores
                                 if not np.isneginf(s)], dtype=np.float64))
    allowed = int(np.floor(target_fa_per_hour * hours))
    if allowed < 1:
        raise InsufficientDataError(
            f"target {target_fa_per_hour}/hr over {hours:.2f} h allows "
            f"{allowed} alarms; need more negative audio")
    if scores.size == 0:
        raise InsufficientDataError("no negative scores to fix a threshold on")
    if allowed >= scores.size:
        threshold = float(scores[0])
    else:
        candidates = scores[np.searchsorted(
            scores, scores[-allowed], side="left"):]
        threshold = None
        for c in np.unique(candidates):
            if np.count_nonzero(scores >= c) <= allowed:
                threshold = float(c)
                break
        if threshold is None:
            threshold = float(np.nextafter(scores[-1], np.inf))
    achieved = float(np.count_nonzero(scores >= threshold) / hours)
    return OperatingPoint(threshold=threshold, fa_per_hour=achieved,
                          source=source)


def frr_report(positives_by_condition, op, negative_scores=(), hours=None,
               det_points=200):
    """FRR per condition at the operating threshold, plus a DET sweep."""
    per_condition, counts = {}, {}
    all_scores = []
    for cond, scores in positives_by_condition.items():
        scores = np.asarray(list(scores), dtype=np.float64)
        if scores.size == 0:
            continue   # absent, not zero
        per_condition[cond] = float(np.mean(scores < op.threshold))
        counts[cond] = int(scores.size)
        all_scores.append(scores)
    if not all_scores:
        raise InsufficientDataError("no positives in any condition")
    pooled = np.concatenate(all_scores)
    overall = float(np.mean(pooled < op.threshold))
    det = []
    if hours is not None and len(negative_scores) > 0:
        neg = np.sort(np.asarray(list(negative_scores), dtype=np.float64))
        sweep = np.unique(np.concatenate([neg, pooled]))
        if sweep.size > det_points:
            idx = np.linspace(0, sweep.size - 1, det_points).astype(int)
            sweep = sweep[idx]
        for threshold in sweep:
            frr = float(np.mean(pooled < threshold))
            fa = float(np.count_nonzero(neg >= threshold) / hours)
            det.append((float(threshold), frr, fa))
    return EvalReport(threshold=float(op.threshold),
                      per_condition=per_condition, counts=counts,
                      overall_frr=overall,
                      achieved_fa_per_hour=float(op.fa_per_hour), det=det)


def positives_by_condition(positives):
    grouped = {}
    for p in positives:
        grouped.setdefault(p.condition, []).append(p.score)
    return grouped


def assert_identities(report):
    """The consistency identities behind --assert; returns (name, ok, detail)."""
    checks = []
    frrs = list(report.per_condition.values()) + [report.overall_frr]
    ok = all(0.0 <= v <= 1.0 for v in frrs)
    checks.append(("frr_in_unit_interval", ok, f"values={frrs}"))

    total = sum(report.counts.values())
    weighted = sum(report.per_condition[c] * report.counts[c]
                   for c in report.per_condition) / max(total, 1)
    ok = abs(weighted - report.overall_frr) < 1e-12
    checks.append(("overall_is_weighted_mean", ok,
                   f"weighted={weighted} overall={report.overall_frr}"))

    ok = report.achieved_fa_per_hour >= 0
    checks.append(("fa_rate_nonnegative", ok,
                   f"fa={report.achieved_fa_per_hour}"))

    det_ok = True
    detail = "empty sweep"
    if report.det:
        by_threshold = sorted(report.det)
        frr_seq = [d[1] for d in by_threshold]
        fa_seq = [d[2] for d in by_threshold]
        det_ok = all(a <= b + 1e-12 for a, b in zip(frr_seq, frr_seq[1:])) \
            and all(a >= b - 1e-12 for a, b in zip(fa_seq, fa_seq[1:]))
        detail = f"{len(report.det)} samples"
    checks.append(("det_monotone", det_ok, detail))
    return checks


def bootstrap_frr_diff(scores_a, scores_b, threshold_a, threshold_b,
                       n_resamples=2000, seed=0, alpha=0.10):
    """Paired bootstrap CI for FRR(a) - FRR(b) on the same positives."""
    a = np.asarray(list(scores_a), dtype=np.float64)
    b = np.asarray(list(scores_b), dtype=np.float64)
    if a.shape != b.shape or a.size == 0:
        raise ShapeError("paired bootstrap needs equal-length nonempty scores")
    miss_a = a < threshold_a
    miss_b = b < threshold_b
    point = float(miss_a.mean() - miss_b.mean())
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, a.size, size=(n_resamples, a.size))
    diffs = miss_a[idx].mean(axis=1) - miss_b[idx].mean(axis=1)
    lo, hi = np.quantile(diffs, [alpha / 2.0, 1.0 - alpha / 2.0])
    return float(lo), float(hi), point
