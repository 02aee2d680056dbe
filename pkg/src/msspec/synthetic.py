"""Deterministic synthetic speech-like corpus.

Each phone gets a fixed harmonic template (pitch, three formant peaks,
voicing) derived from a hash of its name; an utterance is the
concatenation of its phones' templates over their durations, with a
slowly falling pitch contour across the utterance and a per-word gain so
that coarser scales carry structure of their own.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from msspec.dsp import AudioClip, MelConfig, write_wav
from msspec.linguistic import SIL_PHONE, DurationVector, Lexicon, Utterance, default_lexicon, front_end, save_durations

_NOISY = {"s", "sh", "f", "th", "hh", "z", "@s", "@f", "@x", "@z"}


@dataclass(frozen=True)
class PhoneTemplate:
    f0: float
    formants: tuple[float, float, float]
    voiced: bool
    gain: float


def phone_template(phone: str) -> PhoneTemplate:
    rng = np.random.default_rng(zlib.crc32(phone.encode("utf-8")))
    f0 = float(rng.uniform(100.0, 220.0))
    formants = tuple(float(f) for f in np.sort(rng.uniform([250.0, 800.0, 1800.0], [850.0, 2200.0, 3800.0])))
    return PhoneTemplate(f0, formants, phone not in _NOISY, float(rng.uniform(0.4, 1.0)))


def _envelope(freqs, formants):
    amp = np.full_like(freqs, 0.03)
    for k, f in enumerate(formants):
        amp += np.exp(-0.5 * ((freqs - f) / (80.0 + 40.0 * k)) ** 2) / (1 + k)
    return amp


def render(utt: Utterance, d: DurationVector, config: MelConfig = MelConfig(), seed: int = 0) -> AudioClip:
    """Waveform of exactly ``sum(d) * hop`` samples."""
    hop, sr = config.hop, config.sample_rate
    rng = np.random.default_rng(seed)
    n = d.total_frames * hop
    out = np.zeros(n)
    contour = np.linspace(1.1, 0.9, n)
    word_gain = rng.uniform(0.6, 1.0, size=utt.n_words)
    phase = 0.0
    start = 0
    for phone, w, frames in zip(utt.phonemes, utt.phoneme_word_index, d.durations):
        seg = frames * hop
        stop = start + seg
        if phone == SIL_PHONE:
            out[start:stop] = 1e-4 * rng.standard_normal(seg)
            start = stop
            continue
        tpl = phone_template(phone)
        f0 = tpl.f0 * contour[start:stop]
        inst = phase + 2 * np.pi * np.cumsum(f0) / sr
        phase = float(inst[-1])
        if tpl.voiced:
            n_harm = int(min(40, (sr / 2 - 500) // tpl.f0))
            ks = np.arange(1, n_harm + 1)
            amps = _envelope(ks * tpl.f0, tpl.formants)
            sig = np.sin(np.outer(inst, ks)) @ amps
        else:
            spec = np.fft.rfft(rng.standard_normal(seg))
            spec *= _envelope(np.fft.rfftfreq(seg, 1 / sr), [f * 2 for f in tpl.formants])
            sig = np.fft.irfft(spec, n=seg) * 8.0
        ramp = np.minimum(1.0, np.minimum(np.arange(seg) + 1, seg - np.arange(seg)) / (0.2 * hop))
        out[start:stop] = sig * ramp * tpl.gain * word_gain[w]
        start = stop
    peak = np.abs(out).max()
    if peak > 0:
        out *= 0.5 / peak
    return AudioClip(out, sr)


def random_utterance(rng, lexicon: Lexicon, min_words=4, max_words=10) -> tuple[Utterance, DurationVector]:
    vocab = lexicon.words()
    n_words = int(rng.integers(min_words, max_words + 1))
    text = " ".join(rng.choice(vocab, size=n_words)).capitalize() + "."
    utt = front_end(text, lexicon, eos_silence=True)
    durs = []
    for phone in utt.phonemes:
        durs.append(int(rng.integers(10, 24)) if phone == SIL_PHONE else int(rng.integers(3, 13)))
    return utt, DurationVector(tuple(durs))


def generate_corpus(out_dir, n_utts: int = 10, seed: int = 0, lexicon: Lexicon | None = None,
                    min_words: int = 4, max_words: int = 10, config: MelConfig = MelConfig()) -> Path:
    """Write ``wav/``, ``dur/`` and ``manifest.jsonl``; returns the manifest path."""
    lexicon = default_lexicon() if lexicon is None else lexicon
    out = Path(out_dir)
    (out / "wav").mkdir(parents=True, exist_ok=True)
    (out / "dur").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    records = []
    for k in range(n_utts):
        utt_id = f"syn{k:04d}"
        utt, d = random_utterance(rng, lexicon, min_words, max_words)
        write_wav(out / "wav" / f"{utt_id}.wav", render(utt, d, config, seed=seed * 100003 + k))
        save_durations(out / "dur" / f"{utt_id}.txt", d)
        records.append({"id": utt_id, "text": utt.text, "wav": f"wav/{utt_id}.wav", "durations": f"dur/{utt_id}.txt"})
    manifest = out / "manifest.jsonl"
    manifest.write_text("".join(json.dumps(r, sort_keys=True) + "\n" for r in records), encoding="utf-8")
    return manifest


FIG3_TEXT = "He headed straight for his desk."


def make_fig3_fixture(out_dir, seed: int = 3, config: MelConfig = MelConfig()) -> Path:
    """Write ``text.txt``, ``durations.txt``, ``audio.wav`` and ``mel.mel`` for the figure sentence."""
    from msspec.dsp import extract_mel, save_mel

    utt = front_end(FIG3_TEXT, default_lexicon(), eos_silence=True)
    rng = np.random.default_rng(seed)
    d = DurationVector(tuple(int(rng.integers(10, 24)) if p == SIL_PHONE else int(rng.integers(3, 13))
                             for p in utt.phonemes))
    clip = render(utt, d, config, seed=seed)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "text.txt").write_text(FIG3_TEXT + "\n", encoding="utf-8")
    save_durations(out / "durations.txt", d)
    write_wav(out / "audio.wav", clip)
    save_mel(out / "mel.mel", extract_mel(clip, config))
    return out


def fig3_fixture_dir() -> Path:
    """Directory of the shipped figure-sentence fixture."""
    from importlib import resources

    return Path(str(resources.files("msspec").joinpath("data/fig3")))
