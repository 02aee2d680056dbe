import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from msspec.dsp import (
    LOG_FLOOR, AudioClip, MelConfig, MelSpectrogram, extract_mel, griffin_lim, hz_to_mel, load_mel,
    mel_band_edges, mel_filterbank, mel_from_bytes, mel_to_bytes, mel_to_magnitude, read_wav,
    reconstruct_phase, save_mel, stft, write_wav,
)
from msspec.errors import InvalidInput

CFG = MelConfig()
SR = CFG.sample_rate


def sine(freq, seconds=1.0, amp=0.5):
    t = np.arange(int(SR * seconds)) / SR
    return AudioClip(amp * np.sin(2 * np.pi * freq * t), SR)


def test_hop_and_one_second_frame_count():
    assert CFG.hop == 300
    assert extract_mel(sine(440)).n_frames == 80


def test_all_zero_clip_is_floor():
    mel = extract_mel(AudioClip(np.zeros(5000), SR))
    assert np.all(mel.frames == math.log(LOG_FLOOR))


@pytest.mark.parametrize("freq", [300.0, 440.0, 1250.0, 4000.0])
def test_sine_peaks_in_nearest_band(freq):
    mel = extract_mel(sine(freq))
    centres = mel_band_edges(CFG.n_mels, 0, SR / 2)[1:-1]
    # brute force: band whose centre is nearest the tone
    expected = int(np.argmin(np.abs(centres - freq)))
    argmax = np.argmax(mel.frames[5:-5], axis=1)
    assert np.all(argmax == expected)


def test_filterbank_shape_and_coverage():
    fb = mel_filterbank(1024, 80, 24000, 0, 12000)
    assert fb.shape == (80, 513)
    assert np.all(fb >= 0)
    assert np.all(fb.sum(axis=1) > 0)


def test_single_band_triangle_peaks_at_mel_midpoint():
    fb = mel_filterbank(1024, 1, 24000, 100, 8000)
    bins = np.arange(513) * 24000 / 1024
    nz = bins[fb[0] > 0]
    assert nz.min() > 100 and nz.max() < 8000
    mid_hz = mel_band_edges(1, 100, 8000)[1]
    assert abs(bins[np.argmax(fb[0])] - mid_hz) <= 24000 / 1024
    assert math.isclose(float(hz_to_mel(mid_hz)), (float(hz_to_mel(100)) + float(hz_to_mel(8000))) / 2)


@pytest.mark.parametrize("kw", [dict(fmax=13000), dict(fmin=500, fmax=400), dict(fmin=-1, fmax=100)])
def test_filterbank_rejects_bad_ranges(kw):
    args = dict(n_fft=1024, n_mels=80, sample_rate=24000, fmin=0, fmax=12000)
    args.update(kw)
    with pytest.raises(InvalidInput):
        mel_filterbank(**args)


def test_extract_rejects_bad_clips():
    with pytest.raises(InvalidInput):
        extract_mel(AudioClip(np.zeros(0), SR))
    with pytest.raises((InvalidInput, ValueError)):
        extract_mel(AudioClip(np.array([0.0, np.nan, 0.0]), SR))
    with pytest.raises(InvalidInput):
        extract_mel(AudioClip(np.zeros(100), 16000))


@given(n=st.integers(1, 20000))
@settings(max_examples=100, deadline=None)
def test_frame_count_property(n):
    x = np.random.default_rng(n).normal(scale=0.1, size=n)
    assert extract_mel(AudioClip(x, SR)).n_frames == -(-n // 300)


def test_extraction_is_deterministic():
    x = np.random.default_rng(0).normal(scale=0.1, size=7000)
    a = extract_mel(AudioClip(x, SR))
    b = extract_mel(AudioClip(x.copy(), SR))
    assert mel_to_bytes(a) == mel_to_bytes(b)
    np.testing.assert_array_equal(a.frames, b.frames)


def test_doubling_amplitude_never_lowers_log_mel():
    x = np.random.default_rng(1).normal(scale=0.05, size=9000)
    a = extract_mel(AudioClip(x, SR)).frames
    b = extract_mel(AudioClip(2 * x, SR)).frames
    assert np.all(b >= a)


def test_griffin_lim_floor_mel_is_near_silent():
    mel = MelSpectrogram(np.full((40, 80), math.log(LOG_FLOOR)))
    out = griffin_lim(mel, CFG, iters=10)
    assert len(out) == 40 * CFG.hop
    assert np.abs(out.samples).max() < 0.01


@pytest.mark.parametrize("freq", [220.0, 440.0, 1000.0, 3000.0])
def test_griffin_lim_sine_round_trip_frequency(freq):
    out = griffin_lim(extract_mel(sine(freq)), CFG, iters=60)
    spec = np.abs(stft(out.samples, CFG)).mean(axis=0)
    peak_hz = np.argmax(spec) * SR / CFG.n_fft
    assert abs(peak_hz - freq) <= SR / CFG.n_fft


def test_griffin_lim_error_improves():
    mag = mel_to_magnitude(extract_mel(sine(440, 0.5)), CFG)
    _, errs = reconstruct_phase(mag, CFG, iters=60)
    assert errs[-1] <= errs[0]
    # non-increasing on average: compare first and second halves
    assert np.mean(errs[30:]) <= np.mean(errs[:30])


def test_griffin_lim_rejects_config_mismatch():
    with pytest.raises(InvalidInput):
        griffin_lim(MelSpectrogram(np.zeros((4, 40))), CFG, iters=1)
    with pytest.raises(InvalidInput):
        griffin_lim(MelSpectrogram(np.zeros((4, 80))), CFG, iters=0)


def test_melspec_round_trip_bit_exact(tmp_path):
    frames = np.random.default_rng(2).normal(size=(13, 80)).astype(np.float32).astype(np.float64)
    mel = MelSpectrogram(frames, 12.5)
    save_mel(tmp_path / "a.mel", mel)
    back = load_mel(tmp_path / "a.mel")
    np.testing.assert_array_equal(back.frames, frames)
    assert back.frame_shift_ms == 12.5
    assert mel_to_bytes(back) == (tmp_path / "a.mel").read_bytes()


def test_melspec_header_layout():
    buf = mel_to_bytes(MelSpectrogram(np.zeros((3, 2)), 12.5))
    assert buf[:8] == b"MELSPEC1"
    assert buf[8:20] == (3).to_bytes(4, "little") + (2).to_bytes(4, "little") + (12500).to_bytes(4, "little")
    assert len(buf) == 20 + 3 * 2 * 4


def test_melspec_rejects_bad_magic_and_truncation():
    buf = mel_to_bytes(MelSpectrogram(np.zeros((3, 2))))
    with pytest.raises(InvalidInput):
        mel_from_bytes(b"MELSPEC2" + buf[8:])
    with pytest.raises(InvalidInput):
        mel_from_bytes(buf[:-1])


def test_wav_round_trip_and_rate_check(tmp_path):
    clip = sine(440, 0.1)
    write_wav(tmp_path / "s.wav", clip)
    back = read_wav(tmp_path / "s.wav", expected_rate=SR)
    assert back.sample_rate == SR and len(back) == len(clip)
    assert np.abs(back.samples - clip.samples).max() < 1 / 32767 + 1e-12
    with pytest.raises(InvalidInput):
        read_wav(tmp_path / "s.wav", expected_rate=16000)
