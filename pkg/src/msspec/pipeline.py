"""Programmatic versions of the command-line steps."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from msspec.dsp import AudioClip, MelConfig, MelSpectrogram, extract_mel, griffin_lim, load_mel, read_wav, save_mel, write_wav
from msspec.errors import CheckpointError, InvalidInput
from msspec.linguistic import DurationVector, Lexicon, Utterance, check_durations, default_lexicon, front_end, load_durations, save_durations
from msspec.model import AcousticModel, DurationConfig, DurationModel, ModelConfig, load_checkpoint
from msspec.multiscale import AlignmentVector, ScaleHierarchy, ScaleLevel, build_hierarchy, linguistic_alignments, normalize_mode, save_hierarchy
from msspec.training import DatasetIndex, TrainConfig, load_toml, train_acoustic, train_config_from_dict, train_duration

log = logging.getLogger(__name__)


class ConfigError(InvalidInput):
    """Malformed or inconsistent configuration file."""


# ---------------------------------------------------------------------------
# extract


def mel_config_from(d: dict | None) -> MelConfig:
    if not d:
        return MelConfig()
    known = {f.name for f in fields(MelConfig)}
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"unknown [mel] keys: {sorted(unknown)}")
    try:
        return MelConfig(**d)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"bad [mel] table: {e}") from None


def extract_directory(wav_dir, out_dir, config: MelConfig = MelConfig()):
    """Extract one MELSPEC1 file per ``*.wav``; returns ``(records, failures)``."""
    wav_dir, out = Path(wav_dir), Path(out_dir)
    wavs = sorted(wav_dir.glob("*.wav"))
    if not wavs:
        return [], []
    out.mkdir(parents=True, exist_ok=True)
    records, failures = [], []
    for wav in wavs:
        try:
            mel = extract_mel(read_wav(wav, expected_rate=config.sample_rate), config)
        except (InvalidInput, OSError, EOFError) as e:
            failures.append((wav, str(e)))
            continue
        target = out / f"{wav.stem}.mel"
        save_mel(target, mel)
        records.append({"id": wav.stem, "wav": str(wav.resolve()), "mel": target.name, "n_frames": mel.n_frames})
    (out / "manifest.jsonl").write_text("".join(json.dumps(r, sort_keys=True) + "\n" for r in records), encoding="utf-8")
    return records, failures


# ---------------------------------------------------------------------------
# build-scales


def build_scales(mel_path, text: str, durations_path, mode: str, out_dir, lexicon: Lexicon | None = None,
                 eos_silence: bool = True) -> ScaleHierarchy:
    mel = load_mel(mel_path)
    utt = front_end(text, lexicon, eos_silence=eos_silence)
    d = load_durations(durations_path, utt)
    h = build_hierarchy(mel, utt, d, mode)
    save_hierarchy(h, out_dir)
    return h


# ---------------------------------------------------------------------------
# train


def _resolve(base: Path, p) -> Path:
    p = Path(p)
    return p if p.is_absolute() else base / p


def load_run_config(path) -> dict:
    try:
        return load_toml(path)
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    except Exception as e:  # tomli raises its own decode error type
        raise ConfigError(f"cannot parse config {path}: {e}") from None


def train_from_config(config_path, mode: str | None = None, seed: int | None = None) -> dict:
    """Train acoustic and (optionally) duration models as described by a TOML file.

    Top-level keys: ``manifest``, ``out_dir``, optional ``mel_dir``,
    ``train_duration`` (default true) and any training field (``mode``,
    ``max_steps``, ``acoustic_lr`` ...).  Tables ``[model]``,
    ``[duration_model]`` and ``[mel]`` override the respective configs.
    Relative paths resolve against the config file's directory.
    """
    config_path = Path(config_path)
    raw = load_run_config(config_path)
    base = config_path.parent
    try:
        manifest = _resolve(base, raw.pop("manifest"))
        out_dir = _resolve(base, raw.pop("out_dir"))
    except KeyError as e:
        raise ConfigError(f"config is missing {e.args[0]!r}") from None
    mel_dir = raw.pop("mel_dir", None)
    do_duration = bool(raw.pop("train_duration", True))
    model_kw = raw.pop("model", {})
    dur_kw = raw.pop("duration_model", {})
    mel_cfg = mel_config_from(raw.pop("mel", None))
    if mode is not None:
        raw["mode"] = mode
    if seed is not None:
        raw["seed"] = seed
    try:
        tcfg = train_config_from_dict(raw)
    except (TypeError, InvalidInput) as e:
        raise ConfigError(str(e)) from None
    dataset = DatasetIndex.from_manifest(
        manifest, mel_dir=_resolve(base, mel_dir) if mel_dir else None, mel_config=mel_cfg
    )
    phones = dataset.lexicon.phone_set()
    for bad in ("mode", "phones"):
        if bad in model_kw or bad in dur_kw:
            raise ConfigError(f"{bad!r} cannot be set inside [model]/[duration_model]")
    try:
        mcfg = ModelConfig(mode=tcfg.mode, phones=phones, seed=tcfg.seed, **model_kw)
        dcfg = DurationConfig(phones=phones, seed=tcfg.seed, **dur_kw)
    except (TypeError, InvalidInput) as e:
        raise ConfigError(str(e)) from None
    out_dir.mkdir(parents=True, exist_ok=True)
    train_acoustic(dataset, tcfg, mcfg, out_dir=out_dir)
    paths = {"acoustic": out_dir / "acoustic.ckpt", "acoustic_log": out_dir / "acoustic_log.jsonl"}
    if do_duration:
        train_duration(dataset, tcfg, dcfg, out_dir=out_dir)
        paths.update(duration=out_dir / "duration.ckpt", duration_log=out_dir / "duration_log.jsonl")
    return paths


# ---------------------------------------------------------------------------
# synth


@dataclass
class SynthesisResult:
    utterance: Utterance
    durations: DurationVector
    hierarchy: ScaleHierarchy
    audio: AudioClip | None

    @property
    def mel(self) -> MelSpectrogram:
        return self.hierarchy.frame_level


def load_models(acoustic_path, duration_path=None, mode: str | None = None):
    acoustic = load_checkpoint(acoustic_path, expect_mode=mode)
    if not isinstance(acoustic, AcousticModel):
        raise CheckpointError(f"{acoustic_path} is not an acoustic checkpoint")
    duration = None
    if duration_path is not None:
        duration = load_checkpoint(duration_path)
        if not isinstance(duration, DurationModel):
            raise CheckpointError(f"{duration_path} is not a duration checkpoint")
    return acoustic, duration


def synthesize(text: str, acoustic: AcousticModel, duration: DurationModel | None = None, durations=None,
               gl_iters: int = 60, mel_config: MelConfig = MelConfig(), lexicon: Lexicon | None = None,
               vocode: bool = True) -> SynthesisResult:
    """Predict durations (unless given), then every scale with those durations."""
    utt = front_end(text, lexicon, eos_silence=True)
    if durations is None:
        if duration is None:
            raise InvalidInput("need a duration model or explicit durations")
        d = DurationVector(tuple(duration.predict_durations(utt.phoneme_ids(duration.config.phones)).tolist()))
    else:
        d = check_durations(durations, utt)
    preds = acoustic.forward(utt.phoneme_ids(acoustic.config.phones), utt.phonemes_per_word(), d.as_array())
    mode = acoustic.config.mode
    if mode == "baseline":
        aligns = []
    else:
        aligns = linguistic_alignments(utt, d, mode)
    levels = [ScaleLevel(len(aligns) - k, a, MelSpectrogram(preds.array(len(aligns) - k).astype(np.float64)))
              for k, a in enumerate(aligns)]
    levels.append(ScaleLevel(0, AlignmentVector((1,) * d.total_frames), MelSpectrogram(preds.array(0).astype(np.float64))))
    hier = ScaleHierarchy(mode, levels)
    audio = griffin_lim(hier.frame_level, mel_config, gl_iters) if vocode else None
    return SynthesisResult(utt, d, hier, audio)


def save_synthesis(result: SynthesisResult, out_dir):
    out = Path(out_dir)
    save_hierarchy(result.hierarchy, out / "scales")
    save_mel(out / "mel.mel", result.mel)
    save_durations(out / "durations.txt", result.durations)
    if result.audio is not None:
        write_wav(out / "audio.wav", result.audio)
    return out
