"""Feature pipeline tests against direct-DFT, energy, and filterbank oracles."""

import numpy as np
import pytest

from mcvt.errors import ConfigError, EmptyInputError
from mcvt.features import (
    AudioClip,
    FeatureConfig,
    apply_norm,
    compute_norm,
    extract_features,
    extract_logmel,
    hz_to_mel,
    load_wav,
    logmel,
    mel_filterbank,
    mel_to_hz,
    save_wav,
    stack_context,
    stft,
)

CFG = FeatureConfig()
NATS_PER_6DB = 6.0 / (10.0 / np.log(10.0))  # 6 dB expressed in natural-log units


def _tone(freq, seconds=0.3, amp=0.3):
    t = np.arange(int(seconds * CFG.sample_rate)) / CFG.sample_rate
    return AudioClip(amp * np.sin(2 * np.pi * freq * t))


class TestStft:
    def test_tone_peak_at_nearest_bin_every_frame(self):
        spec = stft(_tone(1000.0))
        bin_hz = CFG.sample_rate / CFG.win_length
        expect = int(round(1000.0 / bin_hz))
        mags = np.abs(spec)
        assert np.all(mags.argmax(axis=1) == expect)

    def test_matches_naive_dft_oracle(self):
        clip = _tone(777.0, seconds=0.05)
        spec = stft(clip)
        win = CFG.win_length
        w = np.hanning(win)
        y = clip.samples[:win] * w
        n_bins = win // 2 + 1
        naive = np.zeros(n_bins, dtype=complex)
        for k in range(n_bins):
            naive[k] = np.sum(y * np.exp(-2j * np.pi * k * np.arange(win) / win))
        np.testing.assert_allclose(spec[0], naive, atol=1e-8)

    def test_zero_audio_zero_magnitudes(self):
        spec = stft(AudioClip(np.zeros(CFG.sample_rate)))
        assert np.all(np.abs(spec) == 0.0)

    def test_parseval_energy(self):
        rng = np.random.default_rng(0)
        clip = AudioClip(0.2 * rng.normal(size=CFG.sample_rate // 2))
        spec = stft(clip)
        win = CFG.win_length
        w = np.hanning(win)
        # real-spectrum Parseval: DC and Nyquist counted once, others twice
        weights = np.full(spec.shape[1], 2.0)
        weights[0] = 1.0
        if win % 2 == 0:
            weights[-1] = 1.0
        spectral = (weights * np.abs(spec) ** 2).sum(axis=1) / win
        hop = CFG.hop_length
        for t in range(spec.shape[0]):
            frame = clip.samples[t * hop:t * hop + win] * w
            np.testing.assert_allclose(spectral[t], np.sum(frame ** 2), rtol=1e-6)

    def test_frame_count(self):
        clip = AudioClip(np.zeros(CFG.win_length + 5 * CFG.hop_length + 3))
        assert stft(clip).shape[0] == 6

    def test_short_clip_raises(self):
        with pytest.raises(EmptyInputError):
            stft(AudioClip(np.zeros(CFG.win_length - 1)))


class TestLogmel:
    def test_white_noise_profile_is_flat(self):
        rng = np.random.default_rng(1)
        n = CFG.win_length + 299 * CFG.hop_length
        clip = AudioClip(0.3 * rng.normal(size=n))
        mel = extract_logmel(clip)
        profile = mel.mean(axis=0)
        inner = profile[2:-2]
        assert inner.max() - inner.min() < NATS_PER_6DB

    def test_silence_hits_log_floor(self):
        mel = extract_logmel(AudioClip(np.zeros(CFG.sample_rate // 4)))
        np.testing.assert_allclose(mel, np.log(CFG.log_floor), atol=1e-12)

    def test_tone_at_filter_center_wins_that_bin(self):
        edges = mel_to_hz(np.linspace(hz_to_mel(CFG.fmin), hz_to_mel(CFG.fmax), CFG.n_mels + 2))
        centers = edges[1:-1]
        for k in (5, 12, 20, 28, 35):
            mel = extract_logmel(_tone(centers[k]))
            assert np.all(mel.argmax(axis=1) == k), f"bin {k}"

    def test_fmax_above_nyquist_rejected(self):
        with pytest.raises(ConfigError):
            mel_filterbank(FeatureConfig(fmax=9000.0))

    def test_filterbank_covers_band_without_gaps(self):
        fb = mel_filterbank(CFG)
        freqs = np.arange(fb.shape[1]) * CFG.sample_rate / CFG.win_length
        covered = fb.sum(axis=0)
        interior = (freqs > 200) & (freqs < 7000)
        assert np.all(covered[interior] > 0)


class TestStackContext:
    def test_constant_rows_replicate(self):
        row = np.arange(40.0)
        mel = np.tile(row, (6, 1))
        out = stack_context(mel)
        assert out.shape == (6, 280)
        np.testing.assert_array_equal(out, np.tile(row, (6, 7)))

    def test_single_frame_replicates_seven_times(self):
        mel = np.random.default_rng(2).normal(size=(1, 40))
        out = stack_context(mel)
        np.testing.assert_array_equal(out, np.tile(mel, (1, 7)))

    def test_interior_frame_center_is_current_row(self):
        mel = np.arange(10.0)[:, None] * np.ones((10, 40))
        out = stack_context(mel)
        np.testing.assert_array_equal(out[5, 120:160], mel[5])


class TestPipeline:
    def test_dim_is_280(self):
        rng = np.random.default_rng(3)
        for n in (CFG.win_length, 4000, 16000):
            feats = extract_features(AudioClip(0.1 * rng.normal(size=n)))
            assert feats.dim == 280
            assert feats.dim == CFG.stacked_dim

    def test_finite_for_zero_audio(self):
        feats = extract_features(AudioClip(np.zeros(8000)))
        assert np.all(np.isfinite(feats.frames))

    def test_hop_delay_shifts_interior_frames(self):
        rng = np.random.default_rng(4)
        x = 0.2 * rng.normal(size=6000)
        delayed = np.concatenate([np.zeros(CFG.hop_length), x])
        mel_a = extract_logmel(AudioClip(x))
        mel_b = extract_logmel(AudioClip(delayed))
        np.testing.assert_array_equal(mel_b[1:mel_a.shape[0] + 1], mel_a)

    def test_determinism(self):
        rng = np.random.default_rng(5)
        clip = AudioClip(0.2 * rng.normal(size=5000))
        np.testing.assert_array_equal(
            extract_features(clip).frames, extract_features(clip).frames)

    def test_normalization_roundtrip(self):
        rng = np.random.default_rng(6)
        mels = [rng.normal(loc=3.0, scale=2.0, size=(50, 40)) for _ in range(4)]
        mean, std = compute_norm(mels)
        normed = apply_norm(np.concatenate(mels, axis=0), (mean, std))
        np.testing.assert_allclose(normed.mean(axis=0), 0.0, atol=1e-9)
        np.testing.assert_allclose(normed.std(axis=0), 1.0, atol=1e-9)


class TestWavIO:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(7)
        clip = AudioClip(0.5 * rng.uniform(-1, 1, size=4000))
        path = tmp_path / "clip.wav"
        save_wav(path, clip)
        back = load_wav(path)
        assert back.sample_rate == 16000
        np.testing.assert_allclose(back.samples, clip.samples, atol=1.0 / 32767)

    def test_rejects_wrong_rate(self, tmp_path):
        from scipy.io import wavfile

        path = tmp_path / "bad.wav"
        wavfile.write(path, 8000, np.zeros(100, dtype=np.int16))
        with pytest.raises(ConfigError):
            load_wav(path)
