"""Synthetic multichannel corpus generator.

Emulates a speech front-end that always outputs four channels: channel 0
is an "enhanced" mix dominated by the target, channels 1-3 are
"separated" outputs (target-dominant, interference-dominant,
noise-dominant) in seed-randomized order.  Speech is an oscillator-bank
rendering of per-phoneme mel-band templates; the keyword is a fixed
6-phoneme sequence over the 18 keyword-class phonemes; 36 filler
phonemes complete the 54-symbol alphabet.

Scene conditions: quiet (occasionally the enhancement over-suppresses
the target, emulated as complementary spectral notches on the enhanced
and the target-dominant channels with speech-shaped artifacts refilling
each output's dead bands, so no channel and no fixed linear mix of
channels carries a clean full spectrum), noisy (external noise plus an
interfering talker), medium_playback and loud_playback (device music at
-5 and -15 dB SNR).
"""

import functools
import os
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from .ctc import NUM_PHONEMES
from .errors import ConfigError, ShapeError
from .features import SAMPLE_RATE, AudioClip, save_wav

NUM_KEYWORD_PHONEMES = 18
NUM_FILLER_PHONEMES = NUM_PHONEMES - NUM_KEYWORD_PHONEMES
KEYWORD_PHONEMES = (3, 11, 7, 0, 14, 5)

SILENCE_CLASS = 18
FILLER_CLASS = 19

CONDITIONS = ("quiet", "noisy", "medium_playback", "loud_playback")

HOP_SAMPLES = 160  # one 10 ms frame
INVENTORY_SEED = 614

N_MEL_BANDS = 40
_MIN_BAND = 2     # lowest usable mel band for prototypes
_BANDS_PER_PHONEME = 6


@dataclass
class PhonemeModel:
    """Per-phoneme mel-band templates plus duration and noise settings."""

    templates: np.ndarray          # (54, 40) non-negative band weights
    band_freqs: np.ndarray         # (40,) center frequency per band, Hz
    min_frames: int = 4
    max_frames: int = 12
    noise_level: float = 0.003

    def __post_init__(self):
        if self.templates.shape != (NUM_PHONEMES, N_MEL_BANDS):
            raise ShapeError(f"templates must be {NUM_PHONEMES} x {N_MEL_BANDS}")
        if np.any(self.templates < 0):
            raise ConfigError("templates must be non-negative")
        if self.min_frames < 1 or self.max_frames < self.min_frames:
            raise ConfigError("need 1 <= min_frames <= max_frames")


def _mel_band_centers(n_bands=N_MEL_BANDS, fmin=60.0, fmax=7600.0):
    mel = 2595.0 * np.log10(1.0 + np.array([fmin, fmax]) / 700.0)
    points = np.linspace(mel[0], mel[1], n_bands + 2)[1:-1]
    return 700.0 * (10.0 ** (points / 2595.0) - 1.0)


@functools.lru_cache(maxsize=4)
def build_phoneme_inventory(seed=INVENTORY_SEED):
    """Deterministic 54-phoneme inventory; ids < 18 are keyword-class."""
    rng = np.random.default_rng(seed)
    templates = np.zeros((NUM_PHONEMES, N_MEL_BANDS))
    for p in range(NUM_PHONEMES):
        bands = rng.choice(np.arange(_MIN_BAND, N_MEL_BANDS - 1),
                           size=_BANDS_PER_PHONEME, replace=False)
        weights = rng.uniform(0.35, 1.0, size=_BANDS_PER_PHONEME)
        templates[p, np.sort(bands)] = weights
    return PhonemeModel(templates=templates, band_freqs=_mel_band_centers())


@dataclass
class SceneSpec:
    """One rendering request for the four-channel scene simulator."""

    condition: str
    keyword_present: bool = False
    interference_present: bool = False
    noise_snr_db: float = 30.0
    playback_snr_db: float = np.inf
    distort_prob: float = 0.0
    permutation_seed: int = 0
    transcript: tuple = None
    approx_duration_s: float = None

    def __post_init__(self):
        if self.condition not in CONDITIONS:
            raise ConfigError(f"condition '{self.condition}' not in {CONDITIONS}")
        if np.isnan(self.noise_snr_db) or np.isnan(self.playback_snr_db):
            raise ConfigError("SNR values must not be NaN")

    @classmethod
    def for_condition(cls, condition, keyword_present=False, **overrides):
        defaults = {
            "quiet": dict(noise_snr_db=30.0, playback_snr_db=np.inf,
                          interference_present=False, distort_prob=0.5),
            "noisy": dict(noise_snr_db=3.0, playback_snr_db=np.inf,
                          interference_present=True, distort_prob=0.0),
            "medium_playback": dict(noise_snr_db=20.0, playback_snr_db=-5.0,
                                    interference_present=False, distort_prob=0.0),
            "loud_playback": dict(noise_snr_db=20.0, playback_snr_db=-15.0,
                                  interference_present=False, distort_prob=0.0),
        }[condition]
        defaults.update(overrides)
        return cls(condition=condition, keyword_present=keyword_present, **defaults)


@dataclass
class UtteranceRecord:
    """Sample-aligned four-channel scene plus its generation truth."""

    channels: list                  # 4 float arrays in [-1, 1]
    pseudo_selected: int            # channel fed as selected during training
    transcript: tuple               # phoneme ids, no silence symbols
    condition: str
    keyword_flag: bool
    alignment: np.ndarray           # per-frame detector class ids
    clean_target: np.ndarray        # distortion-free target rendering
    utt_id: str = ""

    def __post_init__(self):
        if len(self.channels) != 4:
            raise ShapeError("a record needs exactly 4 channels")
        lengths = {len(c) for c in self.channels}
        if len(lengths) != 1:
            raise ShapeError(f"channel lengths differ: {sorted(lengths)}")

    @property
    def num_samples(self):
        return len(self.channels[0])


# ---------------------------------------------------------------------------
# rendering


def _segment_plan(rng, model, transcript, lead_frames, tail_frames):
    """(class_id, frames, phases) per segment; silence uses class -1."""
    plan = [(-1, lead_frames, None)]
    for p in transcript:
        frames = int(rng.integers(model.min_frames, model.max_frames + 1))
        phases = rng.uniform(0.0, 2.0 * np.pi, size=N_MEL_BANDS)
        plan.append((int(p), frames, phases))
    plan.append((-1, tail_frames, None))
    return plan


def _render_plan(model, plan, band_gain=None, noise_rng=None):
    """Oscillator-bank rendering of a segment plan.

    band_gain optionally scales each mel band's amplitude (spectral
    notching); random phases and durations come from the plan so two
    renders of one plan stay sample-aligned.
    """
    total_frames = sum(frames for _, frames, _ in plan)
    audio = np.zeros(total_frames * HOP_SAMPLES)
    cursor = 0
    for class_id, frames, phases in plan:
        n = frames * HOP_SAMPLES
        if class_id >= 0:
            weights = model.templates[class_id].copy()
            if band_gain is not None:
                weights = weights * band_gain
            active = np.nonzero(weights)[0]
            if active.size:
                t = (np.arange(n) / SAMPLE_RATE)[None, :]
                freqs = model.band_freqs[active][:, None]
                amps = weights[active][:, None]
                seg = (amps * np.sin(2.0 * np.pi * freqs * t + phases[active][:, None])).sum(axis=0)
                seg *= 0.1 / max(1.0, np.sqrt(active.size))
                ramp = min(80, n // 4)
                if ramp:
                    seg[:ramp] *= np.linspace(0.0, 1.0, ramp)
                    seg[-ramp:] *= np.linspace(1.0, 0.0, ramp)
                audio[cursor:cursor + n] = seg
        cursor += n
    if noise_rng is not None and model.noise_level > 0:
        audio += model.noise_level * noise_rng.standard_normal(audio.size)
    return audio


def _plan_alignment(plan):
    classes = []
    for class_id, frames, _ in plan:
        if class_id < 0:
            cls = SILENCE_CLASS
        elif class_id < NUM_KEYWORD_PHONEMES:
            cls = class_id
        else:
            cls = FILLER_CLASS
        classes.extend([cls] * frames)
    return np.asarray(classes, dtype=np.int16)


def _colored_noise(rng, n):
    white = rng.standard_normal(n)
    shaped = lfilter([1.0], [1.0, -0.9], white)
    rms = np.sqrt(np.mean(shaped ** 2))
    return shaped / max(rms, 1e-12)


def _music(rng, n):
    """Chirp mixture standing in for device playback."""
    t = np.arange(n) / SAMPLE_RATE
    audio = np.zeros(n)
    for _ in range(3):
        f0 = rng.uniform(150.0, 800.0)
        f1 = rng.uniform(800.0, 3000.0)
        sweep = f0 + (f1 - f0) * (t / max(t[-1], 1e-9))
        phase = 2.0 * np.pi * np.cumsum(sweep) / SAMPLE_RATE
        audio += rng.uniform(0.4, 1.0) * np.sin(phase + rng.uniform(0, 2 * np.pi))
    rms = np.sqrt(np.mean(audio ** 2))
    return audio / max(rms, 1e-12)


def _suppression_artifact(rng, model, n, band_gain, reference):
    """Speech-shaped residue confined to band_gain's live bands.

    Emulates front-end over-suppression: the bands an output lost do not
    fall silent, they carry unrelated spectral content at near-target
    level, so no linear combination of outputs recovers a clean spectrum
    while per-channel gating still can.
    """
    script = random_transcript(rng, 10, alphabet="filler")
    plan = _segment_plan(rng, model, script, 0, 0)
    sig = _render_plan(model, plan, band_gain=band_gain,
                       noise_rng=np.random.default_rng(int(rng.integers(2 ** 31))))
    if sig.size < n:
        sig = np.tile(sig, int(np.ceil(n / max(sig.size, 1))))
    return _scaled_to_snr(reference, sig[:n], 3.0)


def _scaled_to_snr(target, interferer, snr_db):
    """Scale interferer so that target-vs-interferer power ratio is snr_db."""
    if np.isinf(snr_db):
        return np.zeros_like(interferer)
    p_t = np.mean(target ** 2)
    p_i = np.mean(interferer ** 2)
    if p_i <= 0:
        return np.zeros_like(interferer)
    return interferer * np.sqrt(p_t / (p_i * 10.0 ** (snr_db / 10.0)))


def random_transcript(rng, length, alphabet="all"):
    if alphabet == "filler":
        ids = rng.integers(NUM_KEYWORD_PHONEMES, NUM_PHONEMES, size=length)
    elif alphabet == "all":
        ids = rng.integers(0, NUM_PHONEMES, size=length)
    else:
        raise ConfigError(f"unknown alphabet '{alphabet}'")
    return tuple(int(i) for i in ids)


def contains_keyword(transcript, keyword=KEYWORD_PHONEMES):
    k = len(keyword)
    transcript = tuple(transcript)
    return any(transcript[i:i + k] == keyword for i in range(len(transcript) - k + 1))


def confusable_transcript(rng, length, prefix_len):
    """Filler stream with a keyword prefix inserted; never the full keyword."""
    if not 1 <= prefix_len < len(KEYWORD_PHONEMES):
        raise ConfigError("prefix must be a strict prefix of the keyword")
    base = list(random_transcript(rng, length, alphabet="filler"))
    pos = int(rng.integers(0, len(base) + 1))
    return tuple(base[:pos] + list(KEYWORD_PHONEMES[:prefix_len]) + base[pos:])


def channel_permutation(permutation_seed):
    """Order of the three separated roles; uniform over the 6 permutations."""
    rng = np.random.default_rng([int(permutation_seed), 77])
    return tuple(int(i) for i in rng.permutation(3))


def _default_transcript(rng, spec):
    if spec.transcript is not None:
        transcript = tuple(int(p) for p in spec.transcript)
        if not spec.keyword_present and contains_keyword(transcript):
            raise ConfigError("keyword-absent scene given a transcript containing the keyword")
        return transcript
    if spec.keyword_present:
        return KEYWORD_PHONEMES
    while True:
        length = int(rng.integers(8, 17))
        transcript = random_transcript(rng, length, alphabet="all")
        if not contains_keyword(transcript):
            return transcript


def synth_utterance(spec, seed):
    """Render one four-channel scene, bit-deterministic in (spec, seed)."""
    rng = np.random.default_rng([int(seed), 11])
    model = build_phoneme_inventory()
    transcript = _default_transcript(rng, spec)

    lead = int(rng.integers(20, 41))
    tail = int(rng.integers(20, 41))
    plan = _segment_plan(rng, model, transcript, lead, tail)
    if spec.approx_duration_s is not None:
        want_frames = int(spec.approx_duration_s * SAMPLE_RATE / HOP_SAMPLES)
        while sum(f for _, f, _ in plan) < want_frames:
            extra = random_transcript(rng, 8, alphabet="filler" if not spec.keyword_present else "all")
            plan = plan[:-1] + _segment_plan(rng, model, extra, 0, 0)[1:]
            transcript = transcript + extra

    noise_seed = int(rng.integers(0, 2 ** 31))
    clean_target = _render_plan(model, plan,
                                noise_rng=np.random.default_rng([noise_seed, 0]))
    n = clean_target.size
    alignment = _plan_alignment(plan)

    distorted = rng.random() < spec.distort_prob
    if distorted:
        # complementary notches: even-ranked bands survive on the enhanced
        # channel, odd-ranked on the target-dominant channel; each output's
        # dead bands are refilled with over-suppression artifacts
        gain_a = np.ones(N_MEL_BANDS)
        gain_b = np.ones(N_MEL_BANDS)
        gain_a[1::2] = 0.02
        gain_b[0::2] = 0.02
        target_enh = _render_plan(model, plan, band_gain=gain_a,
                                  noise_rng=np.random.default_rng([noise_seed, 0]))
        target_sep = _render_plan(model, plan, band_gain=gain_b,
                                  noise_rng=np.random.default_rng([noise_seed, 0]))
        target_enh = target_enh + _suppression_artifact(
            rng, model, n, 1.0 - gain_a, target_enh)
        target_sep = target_sep + _suppression_artifact(
            rng, model, n, 1.0 - gain_b, target_sep)
        # only the degraded copy leaks into the remaining outputs
        target_leak = target_sep
    else:
        target_enh = clean_target
        target_sep = clean_target
        target_leak = clean_target

    if spec.interference_present:
        interference_script = random_transcript(rng, int(rng.integers(6, 13)),
                                                alphabet="all")
        iplan = _segment_plan(rng, model, interference_script, 5, 5)
        interference = _render_plan(model, iplan,
                                    noise_rng=np.random.default_rng([noise_seed, 1]))
        if interference.size < n:
            interference = np.pad(interference, (0, n - interference.size))
        interference = _scaled_to_snr(clean_target, interference[:n], 2.0)
    else:
        interference = np.zeros(n)

    noise = _scaled_to_snr(clean_target, _colored_noise(rng, n), spec.noise_snr_db)
    playback = _scaled_to_snr(clean_target, _music(rng, n), spec.playback_snr_db)
    residual_noise = 0.25 * noise
    residual_playback = 0.15 * playback

    enhanced = target_enh + 0.1 * interference + residual_noise + residual_playback
    sep_target = target_sep + 0.2 * interference + 0.4 * noise + 0.5 * playback
    sep_interf = interference + 0.15 * target_leak + 0.4 * noise + 0.5 * playback
    sep_noise = noise + playback + 0.05 * target_leak + 0.1 * interference

    order = channel_permutation(spec.permutation_seed)
    separated = [sep_target, sep_interf, sep_noise]
    channels = [enhanced] + [separated[i] for i in order]

    peak = max(np.max(np.abs(c)) for c in channels)
    if peak > 0.9:
        scale = 0.9 / peak
        channels = [c * scale for c in channels]
        clean_target = clean_target * scale

    return UtteranceRecord(channels=channels, pseudo_selected=0,
                           transcript=transcript, condition=spec.condition,
                           keyword_flag=spec.keyword_present,
                           alignment=alignment, clean_target=clean_target)


# ---------------------------------------------------------------------------
# corpus building


@dataclass
class CorpusConfig:
    """Counts and knobs for one generated dataset."""

    out_dir: str = "corpus"
    base_seed: int = 100
    train_utterances: int = 2000
    train_keyword_fraction: float = 0.3
    dev_positives_per_condition: int = 25
    dev_negatives: int = 50
    eval_positives_per_condition: int = 100
    negative_hours: float = 20.0
    negative_clip_seconds: float = 45.0
    negative_confusable_rate: float = 0.2
    train_confusable_rate: float = 0.25
    condition_cycle: tuple = CONDITIONS

    def __post_init__(self):
        if self.negative_hours < 0 or self.train_utterances < 0:
            raise ConfigError("counts must be non-negative")


@dataclass
class ManifestRow:
    utt_id: str
    channel_paths: tuple
    transcript: tuple
    condition: str
    keyword_flag: bool
    pseudo_selected: int
    duration_s: float
    alignment_path: str = ""


_SPLIT_SEED_OFFSETS = {"train": 0, "dev": 1_000_000, "eval": 2_000_000,
                       "negative": 3_000_000}


def split_seed(base_seed, split, index):
    return base_seed + _SPLIT_SEED_OFFSETS[split] + index


def manifest_path(out_dir, split):
    return os.path.join(out_dir, f"manifest_{split}.tsv")


def write_manifest(path, rows):
    header = ["utt_id", "ch0", "ch1", "ch2", "ch3", "transcript", "condition",
              "keyword_flag", "pseudo_sc", "duration_s", "alignment"]
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write("\t".join(header) + "\n")
        for row in rows:
            fields = [row.utt_id, *row.channel_paths,
                      " ".join(str(p) for p in row.transcript), row.condition,
                      "1" if row.keyword_flag else "0", str(row.pseudo_selected),
                      f"{row.duration_s:.3f}", row.alignment_path]
            fh.write("\t".join(fields) + "\n")
    os.replace(tmp, path)


def read_manifest(path):
    rows = []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split("\t")
        if header[:2] != ["utt_id", "ch0"]:
            raise ConfigError(f"unrecognized manifest header in {path}")
        for line in fh:
            parts = line.rstrip("\n").split("\t")
            if len(parts) != len(header):
                raise ConfigError(f"malformed manifest line in {path}: {line!r}")
            rows.append(ManifestRow(
                utt_id=parts[0], channel_paths=tuple(parts[1:5]),
                transcript=tuple(int(p) for p in parts[5].split()) if parts[5] else (),
                condition=parts[6], keyword_flag=parts[7] == "1",
                pseudo_selected=int(parts[8]), duration_s=float(parts[9]),
                alignment_path=parts[10]))
    return rows


def _write_record(record, out_dir, split, utt_id, save_alignment):
    wav_dir = os.path.join(out_dir, "wav", split)
    os.makedirs(wav_dir, exist_ok=True)
    paths = []
    for ch, audio in enumerate(record.channels):
        rel = os.path.join("wav", split, f"{utt_id}.ch{ch}.wav")
        save_wav(os.path.join(out_dir, rel), AudioClip(audio))
        paths.append(rel)
    align_rel = ""
    if save_alignment:
        align_rel = os.path.join("wav", split, f"{utt_id}.align.npy")
        align_path = os.path.join(out_dir, align_rel)
        tmp = f"{align_path}.tmp.{os.getpid()}"
        np.save(tmp, record.alignment)
        os.replace(f"{tmp}.npy", align_path)
    return ManifestRow(utt_id=utt_id, channel_paths=tuple(paths),
                       transcript=record.transcript, condition=record.condition,
                       keyword_flag=record.keyword_flag,
                       pseudo_selected=record.pseudo_selected,
                       duration_s=record.num_samples / SAMPLE_RATE,
                       alignment_path=align_rel)


def _train_like_rows(config, split, count, rng_seed_salt):
    """Scene specs for train/dev records cycling through the conditions."""
    specs = []
    policy_rng = np.random.default_rng([config.base_seed, rng_seed_salt])
    for k in range(count):
        condition = config.condition_cycle[k % len(config.condition_cycle)]
        keyword = bool(policy_rng.random() < config.train_keyword_fraction)
        transcript = None
        if not keyword and policy_rng.random() < config.train_confusable_rate:
            # keyword prefixes must also occur without the completion, or
            # the acoustic model treats any prefix as proof of the keyword
            # and confusable negatives score as perfect detections
            transcript = confusable_transcript(
                policy_rng, int(policy_rng.integers(8, 17)),
                prefix_len=int(policy_rng.integers(3, 6)))
        specs.append(SceneSpec.for_condition(
            condition, keyword_present=keyword, transcript=transcript,
            permutation_seed=split_seed(config.base_seed, split, k)))
    return specs


def build_corpus(config, splits=("train", "dev", "eval", "negative"),
                 progress=None):
    """Generate WAVs plus one manifest per split; returns manifest paths."""
    out_dir = config.out_dir
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "inventory.txt"), "w", encoding="utf-8") as fh:
        fh.write(describe_inventory())
    written = {}

    if "train" in splits:
        rows = []
        for k, spec in enumerate(_train_like_rows(config, "train",
                                                  config.train_utterances, 1)):
            seed = split_seed(config.base_seed, "train", k)
            record = synth_utterance(spec, seed)
            rows.append(_write_record(record, out_dir, "train",
                                      f"train-{k:06d}", save_alignment=True))
            if progress:
                progress("train", k, config.train_utterances)
        write_manifest(manifest_path(out_dir, "train"), rows)
        written["train"] = manifest_path(out_dir, "train")

    if "dev" in splits:
        rows = []
        k = 0
        for condition in config.condition_cycle:
            for _ in range(config.dev_positives_per_condition):
                seed = split_seed(config.base_seed, "dev", k)
                spec = SceneSpec.for_condition(condition, keyword_present=True,
                                               permutation_seed=seed)
                record = synth_utterance(spec, seed)
                rows.append(_write_record(record, out_dir, "dev",
                                          f"dev-{k:06d}", save_alignment=True))
                k += 1
        neg_rng = np.random.default_rng([config.base_seed, 3])
        for _ in range(config.dev_negatives):
            seed = split_seed(config.base_seed, "dev", k)
            condition = config.condition_cycle[k % len(config.condition_cycle)]
            transcript = random_transcript(neg_rng, int(neg_rng.integers(8, 17)),
                                           alphabet="filler")
            spec = SceneSpec.for_condition(condition, keyword_present=False,
                                           transcript=transcript,
                                           permutation_seed=seed)
            record = synth_utterance(spec, seed)
            rows.append(_write_record(record, out_dir, "dev",
                                      f"dev-{k:06d}", save_alignment=True))
            k += 1
        write_manifest(manifest_path(out_dir, "dev"), rows)
        written["dev"] = manifest_path(out_dir, "dev")

    if "eval" in splits:
        rows = []
        k = 0
        for condition in config.condition_cycle:
            for _ in range(config.eval_positives_per_condition):
                seed = split_seed(config.base_seed, "eval", k)
                spec = SceneSpec.for_condition(condition, keyword_present=True,
                                               permutation_seed=seed)
                record = synth_utterance(spec, seed)
                rows.append(_write_record(record, out_dir, "eval",
                                          f"eval-{k:06d}", save_alignment=False))
                k += 1
                if progress:
                    progress("eval", k, 4 * config.eval_positives_per_condition)
        write_manifest(manifest_path(out_dir, "eval"), rows)
        written["eval"] = manifest_path(out_dir, "eval")

    if "negative" in splits:
        rows = []
        total = 0.0
        k = 0
        neg_rng = np.random.default_rng([config.base_seed, 4])
        n_clips = int(np.ceil(config.negative_hours * 3600.0
                              / config.negative_clip_seconds))
        while k < n_clips:
            seed = split_seed(config.base_seed, "negative", k)
            condition = config.condition_cycle[k % len(config.condition_cycle)]
            if neg_rng.random() < config.negative_confusable_rate:
                transcript = confusable_transcript(
                    neg_rng, 40, prefix_len=int(neg_rng.integers(3, 6)))
            else:
                transcript = random_transcript(neg_rng, 40, alphabet="filler")
            spec = SceneSpec.for_condition(
                condition, keyword_present=False, transcript=transcript,
                approx_duration_s=config.negative_clip_seconds,
                permutation_seed=seed)
            record = synth_utterance(spec, seed)
            rows.append(_write_record(record, out_dir, "negative",
                                      f"neg-{k:06d}", save_alignment=False))
            total += record.num_samples / SAMPLE_RATE
            k += 1
            if progress:
                progress("negative", k, n_clips)
        write_manifest(manifest_path(out_dir, "negative"), rows)
        written["negative"] = manifest_path(out_dir, "negative")

    return written


def describe_inventory():
    model = build_phoneme_inventory()
    lines = [
        f"phonemes: {NUM_PHONEMES} ({NUM_KEYWORD_PHONEMES} keyword-class + "
        f"{NUM_FILLER_PHONEMES} filler)",
        f"keyword: {' '.join(str(p) for p in KEYWORD_PHONEMES)}",
        f"frame: {HOP_SAMPLES} samples at {SAMPLE_RATE} Hz",
        f"durations: {model.min_frames}..{model.max_frames} frames per phoneme",
        "active mel bands per phoneme:",
    ]
    for p in range(NUM_PHONEMES):
        active = np.nonzero(model.templates[p])[0]
        lines.append(f"  {p:2d}: " + " ".join(str(b) for b in active))
    return "\n".join(lines)
