"""Audio I/O, log-mel extraction and Griffin-Lim inversion.

Framing is centered: frame ``t`` is the window centred on sample
``t * hop``, the signal is zero padded on both sides, and a clip of ``n``
samples yields ``ceil(n / hop)`` frames.
"""

from __future__ import annotations

import math
import struct
import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from msspec.errors import InvalidInput

LOG_FLOOR = 1e-5
MEL_MAGIC = b"MELSPEC1"


@dataclass(frozen=True)
class MelConfig:
    sample_rate: int = 24000
    frame_shift_ms: float = 12.5
    n_fft: int = 1024
    win_length: int = 1024
    n_mels: int = 80
    fmin: float = 0.0
    fmax: float | None = None

    @property
    def hop(self) -> int:
        return int(round(self.frame_shift_ms * self.sample_rate / 1000.0))

    @property
    def f_max(self) -> float:
        return self.sample_rate / 2.0 if self.fmax is None else float(self.fmax)


@dataclass
class AudioClip:
    samples: np.ndarray
    sample_rate: int = 24000

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64).reshape(-1)
        if self.sample_rate <= 0:
            raise InvalidInput("sample_rate must be positive")
        if not np.all(np.isfinite(self.samples)):
            raise InvalidInput("audio contains non-finite samples")

    def __len__(self):
        return self.samples.shape[0]


@dataclass
class MelSpectrogram:
    frames: np.ndarray
    frame_shift_ms: float = 12.5

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 2 or self.frames.shape[0] < 1:
            raise InvalidInput(f"mel frames must be a non-empty 2-D matrix, got shape {self.frames.shape}")
        if not np.all(np.isfinite(self.frames)):
            raise InvalidInput("mel frames contain non-finite values")

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def n_mels(self) -> int:
        return self.frames.shape[1]


# ---------------------------------------------------------------------------
# mel scale (Slaney: linear below 1 kHz, logarithmic above)

_F_SP = 200.0 / 3
_MIN_LOG_HZ = 1000.0
_MIN_LOG_MEL = _MIN_LOG_HZ / _F_SP
_LOG_STEP = math.log(6.4) / 27.0


def hz_to_mel(f):
    f = np.asarray(f, dtype=np.float64)
    lin = f / _F_SP
    log = _MIN_LOG_MEL + np.log(np.maximum(f, _MIN_LOG_HZ) / _MIN_LOG_HZ) / _LOG_STEP
    return np.where(f >= _MIN_LOG_HZ, log, lin)


def mel_to_hz(m):
    m = np.asarray(m, dtype=np.float64)
    lin = m * _F_SP
    log = _MIN_LOG_HZ * np.exp(_LOG_STEP * (m - _MIN_LOG_MEL))
    return np.where(m >= _MIN_LOG_MEL, log, lin)


def mel_band_edges(n_mels: int, fmin: float, fmax: float) -> np.ndarray:
    """``n_mels + 2`` frequencies (Hz) equally spaced on the mel axis."""
    return mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))


def mel_filterbank(n_fft: int, n_mels: int, sample_rate: float, fmin: float, fmax: float) -> np.ndarray:
    """Triangular filters with unit peak, shape ``(n_mels, n_fft // 2 + 1)``."""
    if n_fft < 2 or n_mels < 1 or sample_rate <= 0:
        raise InvalidInput("n_fft >= 2, n_mels >= 1 and sample_rate > 0 required")
    if not 0 <= fmin < fmax:
        raise InvalidInput(f"need 0 <= fmin < fmax, got fmin={fmin} fmax={fmax}")
    if fmax > sample_rate / 2:
        raise InvalidInput(f"fmax={fmax} exceeds Nyquist {sample_rate / 2}")
    bins = np.arange(n_fft // 2 + 1) * (sample_rate / n_fft)
    edges = mel_band_edges(n_mels, fmin, fmax)
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (bins[None, :] - lo) / (mid - lo)
    falling = (hi - bins[None, :]) / (hi - mid)
    fb = np.maximum(0.0, np.minimum(rising, falling))
    empty = np.flatnonzero(fb.max(axis=1) <= 0)
    if empty.size:
        raise InvalidInput(f"mel bands {empty.tolist()} contain no FFT bin; increase n_fft or reduce n_mels")
    return fb


# ---------------------------------------------------------------------------
# STFT helpers


def n_frames_for(n_samples: int, hop: int) -> int:
    return -(-n_samples // hop)


def _window(config: MelConfig) -> np.ndarray:
    if config.win_length > config.n_fft:
        raise InvalidInput("win_length must not exceed n_fft")
    win = np.zeros(config.n_fft)
    off = (config.n_fft - config.win_length) // 2
    # periodic Hann
    win[off : off + config.win_length] = 0.5 - 0.5 * np.cos(
        2 * np.pi * np.arange(config.win_length) / config.win_length
    )
    return win


def stft(x: np.ndarray, config: MelConfig, n_frames: int | None = None) -> np.ndarray:
    """Complex STFT, shape ``(T, n_fft // 2 + 1)``, centered framing."""
    hop, n_fft = config.hop, config.n_fft
    if n_frames is None:
        n_frames = n_frames_for(x.shape[0], hop)
    pad_l = n_fft // 2
    total = (n_frames - 1) * hop + n_fft
    padded = np.zeros(max(total, pad_l + x.shape[0]))
    padded[pad_l : pad_l + x.shape[0]] = x
    frames = np.lib.stride_tricks.sliding_window_view(padded, n_fft)[::hop][:n_frames]
    return np.fft.rfft(frames * _window(config), axis=1)


def istft(spec: np.ndarray, config: MelConfig, length: int) -> np.ndarray:
    """Weighted overlap-add inverse of :func:`stft`."""
    hop, n_fft = config.hop, config.n_fft
    win = _window(config)
    n = spec.shape[0]
    frames = np.fft.irfft(spec, n=n_fft, axis=1) * win
    total = (n - 1) * hop + n_fft
    out = np.zeros(total)
    norm = np.zeros(total)
    for t in range(n):
        out[t * hop : t * hop + n_fft] += frames[t]
        norm[t * hop : t * hop + n_fft] += win * win
    nz = norm > 1e-10
    out[nz] /= norm[nz]
    pad_l = n_fft // 2
    y = out[pad_l : pad_l + length]
    if y.shape[0] < length:
        y = np.pad(y, (0, length - y.shape[0]))
    return y


# ---------------------------------------------------------------------------
# extraction / inversion


def _check_config(config: MelConfig, sample_rate: int):
    if config.sample_rate != sample_rate:
        raise InvalidInput(f"clip rate {sample_rate} Hz does not match config rate {config.sample_rate} Hz")
    if config.hop < 1:
        raise InvalidInput("frame shift rounds to zero samples")


def mel_basis(config: MelConfig) -> np.ndarray:
    return mel_filterbank(config.n_fft, config.n_mels, config.sample_rate, config.fmin, config.f_max)


def extract_mel(clip: AudioClip, config: MelConfig = MelConfig()) -> MelSpectrogram:
    """Natural-log mel magnitudes, floor-clamped at ``LOG_FLOOR``."""
    if len(clip) == 0:
        raise InvalidInput("empty audio clip")
    if not np.all(np.isfinite(clip.samples)):
        raise InvalidInput("audio contains non-finite samples")
    _check_config(config, clip.sample_rate)
    mag = np.abs(stft(clip.samples, config))
    mel = mag @ mel_basis(config).T
    return MelSpectrogram(np.log(np.maximum(mel, LOG_FLOOR)), config.frame_shift_ms)


def mel_to_magnitude(mel: MelSpectrogram, config: MelConfig) -> np.ndarray:
    if mel.n_mels != config.n_mels:
        raise InvalidInput(f"mel has {mel.n_mels} bands, config expects {config.n_mels}")
    if not math.isclose(mel.frame_shift_ms, config.frame_shift_ms, rel_tol=1e-6):
        raise InvalidInput("mel frame shift does not match config")
    inv = np.linalg.pinv(mel_basis(config))
    return np.maximum(np.exp(mel.frames) @ inv.T, 0.0)


def spectral_convergence(target_mag: np.ndarray, x: np.ndarray, config: MelConfig) -> float:
    est = np.abs(stft(x, config, n_frames=target_mag.shape[0]))
    return float(np.linalg.norm(target_mag - est) / max(np.linalg.norm(target_mag), 1e-12))


def reconstruct_phase(magnitude: np.ndarray, config: MelConfig, iters: int, seed: int = 0):
    """Griffin-Lim on a linear magnitude spectrogram.

    Returns ``(samples, errors)`` where ``errors[k]`` is the spectral
    convergence of the estimate after iteration ``k + 1``.
    """
    if iters < 1:
        raise InvalidInput("iters must be >= 1")
    n = magnitude.shape[0]
    length = n * config.hop
    rng = np.random.default_rng(seed)
    phase = np.exp(2j * np.pi * rng.random(magnitude.shape))
    errors = []
    x = np.zeros(length)
    for _ in range(iters):
        x = istft(magnitude * phase, config, length)
        rebuilt = stft(x, config, n_frames=n)
        phase = np.exp(1j * np.angle(rebuilt))
        errors.append(
            float(np.linalg.norm(magnitude - np.abs(rebuilt)) / max(np.linalg.norm(magnitude), 1e-12))
        )
    return x, errors


def griffin_lim(mel: MelSpectrogram, config: MelConfig = MelConfig(), iters: int = 60, seed: int = 0) -> AudioClip:
    mag = mel_to_magnitude(mel, config)
    x, _ = reconstruct_phase(mag, config, iters, seed)
    return AudioClip(np.clip(x, -1.0, 1.0), config.sample_rate)


# ---------------------------------------------------------------------------
# file formats


def read_wav(path, expected_rate: int | None = None) -> AudioClip:
    with wave.open(str(path), "rb") as w:
        if w.getnchannels() != 1:
            raise InvalidInput(f"{path}: expected mono audio, got {w.getnchannels()} channels")
        if w.getsampwidth() != 2:
            raise InvalidInput(f"{path}: expected 16-bit PCM")
        rate = w.getframerate()
        data = w.readframes(w.getnframes())
    if expected_rate is not None and rate != expected_rate:
        raise InvalidInput(f"{path}: sample rate {rate} Hz, expected {expected_rate} Hz")
    samples = np.frombuffer(data, dtype="<i2").astype(np.float64) / 32768.0
    return AudioClip(samples, rate)


def write_wav(path, clip: AudioClip):
    pcm = np.clip(np.round(clip.samples * 32767.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(clip.sample_rate)
        w.writeframes(pcm.tobytes())


def mel_to_bytes(mel: MelSpectrogram) -> bytes:
    t, m = mel.frames.shape
    header = MEL_MAGIC + struct.pack("<III", t, m, int(round(mel.frame_shift_ms * 1000)))
    return header + np.ascontiguousarray(mel.frames, dtype="<f4").tobytes()


def mel_from_bytes(buf: bytes) -> MelSpectrogram:
    if len(buf) < 20 or buf[:8] != MEL_MAGIC:
        raise InvalidInput("not a MELSPEC1 file (bad magic)")
    t, m, shift_us = struct.unpack("<III", buf[8:20])
    body = buf[20:]
    if len(body) != 4 * t * m:
        raise InvalidInput(f"MELSPEC1 payload is {len(body)} bytes, header implies {4 * t * m}")
    frames = np.frombuffer(body, dtype="<f4").reshape(t, m).astype(np.float64)
    return MelSpectrogram(frames, shift_us / 1000.0)


def save_mel(path, mel: MelSpectrogram):
    Path(path).write_bytes(mel_to_bytes(mel))


def load_mel(path) -> MelSpectrogram:
    return mel_from_bytes(Path(path).read_bytes())
