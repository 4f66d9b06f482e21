"""Single-channel acoustic features: 40-dim log-mel with +-3 context frames.

The pipeline is WAV (16 kHz mono 16-bit PCM) -> Hann STFT (25 ms window,
10 ms hop, no zero padding) -> area-normalized triangular mel filterbank
over 60..7600 Hz -> natural log with a 1e-10 floor -> context stacking
with edge replication, giving T x 280 feature matrices.  Optional
per-corpus mean/variance normalization is applied at the 40-dim mel stage
and travels with model checkpoints so train and test see identical
features.
"""

import os
from dataclasses import dataclass, field

import numpy as np
from scipy.io import wavfile

from .errors import ConfigError, EmptyInputError, ShapeError

SAMPLE_RATE = 16000


@dataclass
class AudioClip:
    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(self.samples)):
            raise ShapeError("audio contains non-finite samples")

    @property
    def duration(self):
        return len(self.samples) / self.sample_rate


@dataclass
class FeatureConfig:
    sample_rate: int = SAMPLE_RATE
    window_ms: float = 25.0
    hop_ms: float = 10.0
    n_mels: int = 40
    fmin: float = 60.0
    fmax: float = 7600.0
    log_floor: float = 1e-10
    left_context: int = 3
    right_context: int = 3

    @property
    def win_length(self):
        return int(round(self.window_ms * self.sample_rate / 1000.0))

    @property
    def hop_length(self):
        return int(round(self.hop_ms * self.sample_rate / 1000.0))

    @property
    def stacked_dim(self):
        return self.n_mels * (self.left_context + self.right_context + 1)

    def to_meta(self):
        return {f"feature.{k}": str(v) for k, v in vars(self).items()}

    @classmethod
    def from_meta(cls, meta):
        cfg = cls()
        casts = {k: type(v) for k, v in vars(cfg).items()}
        for key, val in meta.items():
            if key.startswith("feature."):
                name = key[len("feature."):]
                if name in casts:
                    setattr(cfg, name, casts[name](val))
        return cfg


@dataclass
class FeatureSequence:
    """T x F matrix of stacked log-mel features for one channel."""

    frames: np.ndarray
    frame_shift: float
    n_mels: int = 40

    def __post_init__(self):
        self.frames = np.asarray(self.frames)
        if self.frames.ndim != 2:
            raise ShapeError("FeatureSequence frames must be 2-D")

    @property
    def num_frames(self):
        return self.frames.shape[0]

    @property
    def dim(self):
        return self.frames.shape[1]


def load_wav(path):
    rate, data = wavfile.read(path)
    if rate != SAMPLE_RATE:
        raise ConfigError(f"{path}: expected {SAMPLE_RATE} Hz, got {rate}")
    if data.ndim != 1:
        raise ConfigError(f"{path}: expected mono audio")
    if data.dtype != np.int16:
        raise ConfigError(f"{path}: expected 16-bit PCM, got {data.dtype}")
    return AudioClip(data.astype(np.float64) / 32768.0, rate)


def save_wav(path, clip):
    x = np.clip(clip.samples, -1.0, 32766.0 / 32767.0)
    tmp = f"{path}.tmp.{os.getpid()}"
    wavfile.write(tmp, clip.sample_rate, np.round(x * 32767.0).astype(np.int16))
    os.replace(tmp, path)


def stft(clip, win_length=None, hop_length=None, cfg=None):
    """Windowed DFT frames; frame count is 1 + floor((len - win) / hop)."""
    cfg = cfg or FeatureConfig()
    win = win_length or cfg.win_length
    hop = hop_length or cfg.hop_length
    if win < hop:
        raise ConfigError("window must be at least one hop long")
    x = clip.samples
    if len(x) < win:
        raise EmptyInputError(f"clip of {len(x)} samples is shorter than one {win}-sample window")
    n_frames = 1 + (len(x) - win) // hop
    idx = np.arange(win)[None, :] + hop * np.arange(n_frames)[:, None]
    window = np.hanning(win)
    return np.fft.rfft(x[idx] * window, axis=1)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(cfg=None, win_length=None):
    """n_mels x n_bins triangular filters, each normalized to unit area.

    Area normalization keeps the response to white noise flat across
    bins; adjacent triangles share edges so the band 60..7600 Hz is
    covered without gaps.
    """
    cfg = cfg or FeatureConfig()
    if cfg.fmax > cfg.sample_rate / 2:
        raise ConfigError(f"fmax {cfg.fmax} above Nyquist {cfg.sample_rate / 2}")
    win = win_length or cfg.win_length
    n_bins = win // 2 + 1
    freqs = np.arange(n_bins) * cfg.sample_rate / win
    edges = mel_to_hz(np.linspace(hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax), cfg.n_mels + 2))
    fb = np.zeros((cfg.n_mels, n_bins))
    for k in range(cfg.n_mels):
        lo, mid, hi = edges[k], edges[k + 1], edges[k + 2]
        up = (freqs - lo) / (mid - lo)
        down = (hi - freqs) / (hi - mid)
        tri = np.clip(np.minimum(up, down), 0.0, None)
        fb[k] = tri * (2.0 / (hi - lo))
    return fb


def logmel(spec, cfg=None, filterbank=None):
    """T x n_mels natural-log mel energies from a complex spectrogram."""
    cfg = cfg or FeatureConfig()
    power = np.abs(spec) ** 2
    if filterbank is None:
        win = 2 * (spec.shape[1] - 1)
        filterbank = mel_filterbank(cfg, win_length=win)
    if filterbank.shape[1] != power.shape[1]:
        raise ShapeError("filterbank does not match spectrogram bins")
    return np.log(power @ filterbank.T + cfg.log_floor)


def stack_context(mel, left=3, right=3):
    """Concatenate [t-left .. t+right] rows per frame, replicating edges."""
    mel = np.asarray(mel)
    if mel.ndim != 2 or mel.shape[0] < 1:
        raise ShapeError("stack_context expects a non-empty T x F matrix")
    t = mel.shape[0]
    cols = []
    for off in range(-left, right + 1):
        idx = np.clip(np.arange(t) + off, 0, t - 1)
        cols.append(mel[idx])
    return np.concatenate(cols, axis=1)


def extract_logmel(clip, cfg=None, filterbank=None):
    cfg = cfg or FeatureConfig()
    return logmel(stft(clip, cfg=cfg), cfg=cfg, filterbank=filterbank)


def extract_features(clip, cfg=None, filterbank=None, norm=None):
    """Full pipeline to a FeatureSequence; norm is an optional (mean, std)."""
    cfg = cfg or FeatureConfig()
    mel = extract_logmel(clip, cfg, filterbank)
    if norm is not None:
        mel = apply_norm(mel, norm)
    stacked = stack_context(mel, cfg.left_context, cfg.right_context)
    return FeatureSequence(stacked, cfg.hop_length / cfg.sample_rate, cfg.n_mels)


def apply_norm(mel, norm):
    mean, std = norm
    return (mel - mean) / std


def compute_norm(mels):
    """Per-dim mean/std over a list of T x n_mels matrices."""
    if not mels:
        raise EmptyInputError("no feature matrices to normalize over")
    stacked = np.concatenate(mels, axis=0)
    mean = stacked.mean(axis=0)
    std = stacked.std(axis=0)
    std[std < 1e-8] = 1.0
    return mean, std
