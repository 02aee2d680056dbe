"""Datasets, Adam, and the two training loops (acoustic, duration)."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from msspec import autograd as ag
from msspec.dsp import MelConfig, MelSpectrogram, extract_mel, load_mel, read_wav
from msspec.errors import InvalidInput, NumericalError
from msspec.linguistic import DurationVector, Lexicon, Utterance, default_lexicon, front_end, load_durations
from msspec.model import (
    AcousticModel,
    DurationConfig,
    DurationModel,
    ModelConfig,
    mss_loss,
    save_checkpoint,
)
from msspec.multiscale import ScaleHierarchy, build_generic, build_hierarchy, normalize_mode

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    mode: str = "word_mss"
    acoustic_lr: float = 1e-3
    duration_lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 1
    max_steps: int = 1000
    duration_steps: int | None = None
    seed: int = 0
    clip_norm: float | None = None
    checkpoint_every: int = 0

    def __post_init__(self):
        object.__setattr__(self, "mode", normalize_mode(self.mode))
        if self.acoustic_lr <= 0 or self.duration_lr <= 0:
            raise InvalidInput("learning rates must be positive")
        if self.batch_size < 1:
            raise InvalidInput("batch_size must be >= 1")
        if self.max_steps < 0:
            raise InvalidInput("max_steps must be >= 0")

    @property
    def n_duration_steps(self) -> int:
        return self.max_steps if self.duration_steps is None else self.duration_steps


# ---------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


def adam_step(params: dict, grads: dict, state: AdamState, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> AdamState:
    """In-place bias-corrected Adam update of ``params`` (name -> ndarray)."""
    state.t += 1
    bc1 = 1.0 - beta1**state.t
    bc2 = 1.0 - beta2**state.t
    updates = {}
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise InvalidInput(f"{name}: gradient shape {g.shape} != parameter shape {p.shape}")
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        step = lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
        if not np.all(np.isfinite(step)):
            raise NumericalError(f"non-finite Adam update for {name}")
        updates[name] = step
    for name, step in updates.items():
        params[name] -= step.astype(params[name].dtype, copy=False)
    return state


class Adam:
    def __init__(self, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.state = AdamState()

    def step(self, store):
        arrays = {n: p.data for n, p in store.params.items()}
        adam_step(arrays, store.grads(), self.state, self.lr, self.beta1, self.beta2, self.eps)


def clip_gradients(store, max_norm: float) -> float:
    grads = [p.grad for p in store.params.values() if p.grad is not None]
    norm = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads)))
    if norm > max_norm:
        for g in grads:
            g *= max_norm / norm
    return norm


# ---------------------------------------------------------------------------
# data


@dataclass
class Example:
    utt_id: str
    utterance: Utterance
    durations: DurationVector
    mel: MelSpectrogram


class DatasetIndex:
    """Utterance records from a newline-delimited JSON manifest.

    Each record carries ``id`` and ``text``, a ``durations`` file, and
    either a ``mel`` (MELSPEC1) or a ``wav`` path; relative paths resolve
    against the manifest's directory.  A record without ``mel`` uses
    ``mel_dir/<id>.mel`` when that exists, otherwise features are extracted
    from the wav.
    """

    def __init__(self, records: list[dict], root: Path, lexicon: Lexicon | None = None,
                 mel_dir: Path | None = None, mel_config: MelConfig = MelConfig()):
        if not records:
            raise InvalidInput("dataset is empty")
        self.records = records
        self.root = Path(root)
        self.lexicon = default_lexicon() if lexicon is None else lexicon
        self.mel_dir = Path(mel_dir) if mel_dir is not None else None
        self.mel_config = mel_config
        self._cache: dict[int, Example] = {}

    @classmethod
    def from_manifest(cls, path, **kw) -> "DatasetIndex":
        path = Path(path)
        if not path.exists():
            raise InvalidInput(f"manifest {path} not found")
        records = []
        for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise InvalidInput(f"{path}:{lineno}: {e}") from None
            for key in ("id", "text", "durations"):
                if key not in rec:
                    raise InvalidInput(f"{path}:{lineno}: missing {key!r}")
            records.append(rec)
        return cls(records, path.parent, **kw)

    @classmethod
    def from_examples(cls, examples: list[Example]) -> "DatasetIndex":
        ds = cls([{"id": e.utt_id, "text": e.utterance.text} for e in examples], Path("."))
        ds._cache = dict(enumerate(examples))
        return ds

    def __len__(self):
        return len(self.records)

    def _resolve(self, p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else self.root / p

    def example(self, i: int) -> Example:
        if i in self._cache:
            return self._cache[i]
        rec = self.records[i]
        utt = front_end(rec["text"], self.lexicon, eos_silence=rec.get("eos_silence", True))
        d = load_durations(self._resolve(rec["durations"]), utt)
        if "mel" in rec:
            mel = load_mel(self._resolve(rec["mel"]))
        elif self.mel_dir is not None and (self.mel_dir / f"{rec['id']}.mel").exists():
            mel = load_mel(self.mel_dir / f"{rec['id']}.mel")
        elif "wav" in rec:
            mel = extract_mel(read_wav(self._resolve(rec["wav"]), self.mel_config.sample_rate), self.mel_config)
        else:
            raise InvalidInput(f"record {rec['id']!r} has neither mel nor wav")
        if d.total_frames != mel.n_frames:
            raise InvalidInput(f"{rec['id']}: durations sum to {d.total_frames}, mel has {mel.n_frames} frames")
        ex = Example(rec["id"], utt, d, mel)
        self._cache[i] = ex
        return ex

    def examples(self) -> list[Example]:
        return [self.example(i) for i in range(len(self))]

    def order(self, epoch: int, seed: int) -> np.ndarray:
        return np.random.default_rng([seed, epoch]).permutation(len(self))

    def schedule(self, n_steps: int, seed: int):
        """Example index for each step: epochs of seeded permutations."""
        out = []
        epoch = 0
        while len(out) < n_steps:
            out.extend(self.order(epoch, seed).tolist())
            epoch += 1
        return out[:n_steps]

    def feature_stats(self) -> tuple[np.ndarray, np.ndarray]:
        frames = np.concatenate([e.mel.frames for e in self.examples()], axis=0)
        return frames.mean(axis=0), frames.std(axis=0)


def targets_for(example: Example, mode: str) -> ScaleHierarchy:
    mode = normalize_mode(mode)
    if mode == "baseline":
        return build_generic(example.mel, [], mode="baseline")
    return build_hierarchy(example.mel, example.utterance, example.durations, mode)


def loss_record_keys(mode: str) -> list[str]:
    from msspec.model import scales_for

    return [f"L{l}" for l in sorted(scales_for(mode))]


# ---------------------------------------------------------------------------
# loops


class _Log:
    def __init__(self, path):
        self.fh = open(path, "w", encoding="utf-8") if path is not None else None

    def write(self, rec):
        if self.fh:
            self.fh.write(json.dumps(rec) + "\n")
            self.fh.flush()

    def close(self):
        if self.fh:
            self.fh.close()


def acoustic_step_loss(model: AcousticModel, example: Example, targets: ScaleHierarchy):
    ids = example.utterance.phoneme_ids(model.config.phones)
    preds = model.forward(
        ids, example.utterance.phonemes_per_word(), example.durations.as_array(),
        teacher_frames=example.mel.frames,
    )
    return mss_loss(preds, targets, model.config.loss)


def train_acoustic(dataset: DatasetIndex, config: TrainConfig, model_config: ModelConfig | None = None,
                   out_dir=None, model: AcousticModel | None = None):
    """Teacher-forced training with oracle durations.

    Returns ``(model, history)``; ``history`` holds one log record per step.
    With ``out_dir`` the initial and final checkpoints and the NDJSON log
    are written there (``acoustic_init.ckpt``, ``acoustic.ckpt``,
    ``acoustic_log.jsonl``).
    """
    if model is None:
        if model_config is None:
            model_config = ModelConfig(mode=config.mode, phones=dataset.lexicon.phone_set(), seed=config.seed)
        model = AcousticModel(model_config)
        mean, std = dataset.feature_stats()
        model.set_feature_stats(mean, std)
    mode = model.config.mode
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        save_checkpoint(out / "acoustic_init.ckpt", model)
    targets = [targets_for(e, mode) for e in dataset.examples()]
    opt = Adam(config.acoustic_lr, config.beta1, config.beta2, config.adam_eps)
    logf = _Log(out / "acoustic_log.jsonl" if out is not None else None)
    history = []
    last_good = model.store.clone()
    try:
        for step, idx in enumerate(dataset.schedule(config.max_steps, config.seed)):
            t0 = time.perf_counter()
            ex = dataset.example(idx)
            model.store.zero_grad()
            total, per_scale = acoustic_step_loss(model, ex, targets[idx])
            try:
                if not np.isfinite(total.item()):
                    raise NumericalError(f"non-finite loss at step {step}")
                ag.backward(total)
                if config.clip_norm:
                    clip_gradients(model.store, config.clip_norm)
                opt.step(model.store)
            except NumericalError:
                log.error("numerical failure at step %d; keeping last good parameters", step)
                model.store = last_good
                raise
            rec = {
                "step": step,
                "utt": ex.utt_id,
                "losses": {f"L{l}": per_scale[l].item() for l in sorted(per_scale)},
                "total": total.item(),
                "wall_ms": round(1000 * (time.perf_counter() - t0), 3),
            }
            history.append(rec)
            logf.write(rec)
            if config.checkpoint_every and (step + 1) % config.checkpoint_every == 0:
                last_good = model.store.clone()
                if out is not None:
                    save_checkpoint(out / "acoustic.ckpt", model)
            log.debug("acoustic step %d total %.5f", step, rec["total"])
    finally:
        logf.close()
        if out is not None:
            save_checkpoint(out / "acoustic.ckpt", model)
    return model, history


def duration_targets(example: Example) -> np.ndarray:
    return example.durations.as_array()


def train_duration(dataset: DatasetIndex, config: TrainConfig, model_config: DurationConfig | None = None,
                   out_dir=None, model: DurationModel | None = None):
    """L2 training of the duration model on log-frame targets.

    The output bias starts at the corpus mean log-duration.
    """
    if model is None:
        if model_config is None:
            model_config = DurationConfig(phones=dataset.lexicon.phone_set(), seed=config.seed)
        model = DurationModel(model_config)
        logs = np.concatenate([np.log(duration_targets(e)) for e in dataset.examples()])
        model.store["dur.head.bias"].data[:] = logs.mean()
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        save_checkpoint(out / "duration_init.ckpt", model)
    opt = Adam(config.duration_lr, config.beta1, config.beta2, config.adam_eps)
    logf = _Log(out / "duration_log.jsonl" if out is not None else None)
    history = []
    try:
        for step, idx in enumerate(dataset.schedule(config.n_duration_steps, config.seed)):
            t0 = time.perf_counter()
            ex = dataset.example(idx)
            model.store.zero_grad()
            loss = model.loss(ex.utterance.phoneme_ids(model.config.phones), duration_targets(ex))
            ag.backward(loss)
            if config.clip_norm:
                clip_gradients(model.store, config.clip_norm)
            opt.step(model.store)
            rec = {
                "step": step,
                "utt": ex.utt_id,
                "losses": {"duration": loss.item()},
                "total": loss.item(),
                "wall_ms": round(1000 * (time.perf_counter() - t0), 3),
            }
            history.append(rec)
            logf.write(rec)
    finally:
        logf.close()
        if out is not None:
            save_checkpoint(out / "duration.ckpt", model)
    return model, history


# ---------------------------------------------------------------------------
# config files

_TRAIN_KEYS = {f.name for f in fields(TrainConfig)}


def load_toml(path) -> dict:
    try:
        import tomllib
    except ModuleNotFoundError:  # python < 3.11
        import tomli as tomllib
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def train_config_from_dict(d: dict) -> TrainConfig:
    unknown = set(d) - _TRAIN_KEYS
    if unknown:
        raise InvalidInput(f"unknown training keys: {sorted(unknown)}")
    return TrainConfig(**d)


def train_config_to_dict(cfg: TrainConfig) -> dict:
    return asdict(cfg)
