"""Acoustic and duration models.

The acoustic model has a convolutional + bidirectional LSTM encoder over
phonemes and one decoder per scale.  Scale decoders run coarsest first and
every decoder receives all coarser predictions, upsampled to its own unit
rate, next to the encoder features:

* sentence (scale 3): last encoder state -> 1 x n_mels
* word (scale 2): per-word projection of encoder outputs (+ sentence row)
* phoneme (scale 1): encoder outputs (+ word rows, + sentence row)
* frame (scale 0): autoregressive LSTM over frames, conditioned on the
  phoneme encoding expanded by durations and on every coarser scale

The baseline keeps only the frame decoder.  Networks work on normalised
spectrogram values; predictions are mapped back with per-band mean/std
buffers so losses and outputs are in log-mel units.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from msspec import autograd as ag
from msspec import kernels
from msspec.autograd import Tensor
from msspec.errors import AlignmentMismatch, CheckpointError, InvalidInput, ModeError
from msspec.multiscale import ScaleHierarchy, normalize_mode

ACOUSTIC_MODES = ("baseline", "word_mss", "sentence_mss")
CKPT_MAGIC = b"MSSCKPT1"

# scale index -> upper scale indices present per mode
_SCALES = {"baseline": (0,), "word_mss": (2, 1, 0), "sentence_mss": (3, 2, 1, 0)}


def scales_for(mode: str) -> tuple[int, ...]:
    return _SCALES[normalize_mode(mode)]


@dataclass(frozen=True)
class ModelConfig:
    mode: str = "word_mss"
    phones: tuple[str, ...] = ()
    n_mels: int = 80
    embed_dim: int = 64
    conv_layers: int = 2
    conv_kernel: int = 5
    conv_channels: int = 64
    conv_residual: bool = True
    encoder_hidden: int = 64
    scale_hidden: int = 128
    phoneme_kernel: int = 3
    word_projection: str = "mean"
    prenet_dim: int = 64
    decoder_hidden: int = 128
    position_feature: bool = True
    loss: str = "mean"
    precision: str = "double"
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "mode", normalize_mode(self.mode))
        object.__setattr__(self, "phones", tuple(self.phones))
        if self.mode not in ACOUSTIC_MODES:
            raise InvalidInput(f"acoustic mode must be one of {ACOUSTIC_MODES}, got {self.mode!r}")
        _check_common(self)
        if self.word_projection not in ("mean", "last"):
            raise InvalidInput("word_projection must be 'mean' or 'last'")
        if self.loss not in ("mean", "sum", "norm"):
            raise InvalidInput("loss must be 'mean', 'sum' or 'norm'")

    @property
    def dtype(self):
        return np.float64 if self.precision == "double" else np.float32

    @property
    def scales(self) -> tuple[int, ...]:
        return _SCALES[self.mode]


@dataclass(frozen=True)
class DurationConfig:
    phones: tuple[str, ...] = ()
    embed_dim: int = 32
    conv_layers: int = 2
    conv_kernel: int = 3
    conv_channels: int = 32
    conv_residual: bool = True
    encoder_hidden: int = 32
    precision: str = "double"
    seed: int = 0
    mode: str = "duration"

    def __post_init__(self):
        object.__setattr__(self, "phones", tuple(self.phones))
        if self.mode != "duration":
            raise InvalidInput("duration config mode must be 'duration'")
        _check_common(self)

    @property
    def dtype(self):
        return np.float64 if self.precision == "double" else np.float32


def _check_common(cfg):
    if not cfg.phones:
        raise InvalidInput("config needs a non-empty phone set")
    if cfg.precision not in ("double", "single"):
        raise InvalidInput("precision must be 'double' or 'single'")
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if isinstance(v, int) and not isinstance(v, bool) and f.name != "seed" and v < 1:
            raise InvalidInput(f"{f.name} must be >= 1")
    if cfg.conv_kernel % 2 == 0:
        raise InvalidInput("conv_kernel must be odd")


def config_to_dict(cfg) -> dict:
    d = asdict(cfg)
    d["phones"] = list(cfg.phones)
    d["kind"] = "duration" if isinstance(cfg, DurationConfig) else "acoustic"
    return d


def config_from_dict(d: dict):
    d = dict(d)
    kind = d.pop("kind", "acoustic")
    cls = DurationConfig if kind == "duration" else ModelConfig
    known = {f.name for f in fields(cls)}
    unknown = set(d) - known
    if unknown:
        raise InvalidInput(f"unknown {kind} config keys: {sorted(unknown)}")
    return cls(**d)


def config_json(cfg) -> bytes:
    return json.dumps(config_to_dict(cfg), sort_keys=True, separators=(",", ":")).encode("utf-8")


def config_digest(cfg) -> bytes:
    return hashlib.sha256(config_json(cfg)).digest()


# ---------------------------------------------------------------------------
# parameters


def _uniform(rng, shape, fan_in, dtype):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class ParamStore:
    """Named trainable tensors plus non-trainable buffers."""

    def __init__(self, dtype):
        self.dtype = dtype
        self.params: dict[str, Tensor] = {}
        self.buffers: dict[str, np.ndarray] = {}

    def add(self, name, value):
        self.params[name] = Tensor(np.asarray(value, dtype=self.dtype), requires_grad=True, name=name)

    def __getitem__(self, name) -> Tensor:
        return self.params[name]

    def __contains__(self, name):
        return name in self.params

    def names(self):
        return list(self.params)

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def grads(self) -> dict[str, np.ndarray]:
        return {n: (p.grad if p.grad is not None else np.zeros_like(p.data)) for n, p in self.params.items()}

    def arrays(self) -> dict[str, np.ndarray]:
        out = {n: p.data for n, p in self.params.items()}
        out.update({f"buffer.{n}": v for n, v in self.buffers.items()})
        return out

    def load_arrays(self, arrays: dict[str, np.ndarray]):
        expected = set(self.params) | {f"buffer.{n}" for n in self.buffers}
        if set(arrays) != expected:
            missing = sorted(expected - set(arrays))
            extra = sorted(set(arrays) - expected)
            raise CheckpointError(f"tensor set mismatch (missing {missing}, unexpected {extra})")
        for name, value in arrays.items():
            target = self.buffers[name[7:]] if name.startswith("buffer.") else self.params[name].data
            if target.shape != value.shape:
                raise CheckpointError(f"{name}: shape {value.shape}, expected {target.shape}")
            if name.startswith("buffer."):
                self.buffers[name[7:]] = value.astype(self.dtype)
            else:
                self.params[name].data = value.astype(self.dtype)

    def clone(self) -> "ParamStore":
        other = ParamStore(self.dtype)
        for n, p in self.params.items():
            other.add(n, p.data.copy())
        other.buffers = {n: v.copy() for n, v in self.buffers.items()}
        return other


def _add_encoder(store: ParamStore, rng, prefix, n_phones, embed, layers, kernel, channels, hidden):
    dt = store.dtype
    store.add(f"{prefix}.embedding", rng.uniform(-0.5, 0.5, size=(n_phones, embed)).astype(dt))
    c_in = embed
    for i in range(layers):
        store.add(f"{prefix}.conv{i}.weight", _uniform(rng, (kernel, c_in, channels), kernel * c_in, dt))
        store.add(f"{prefix}.conv{i}.bias", np.zeros(channels))
        c_in = channels
    for direction in ("fwd", "bwd"):
        store.add(f"{prefix}.lstm_{direction}.w_ih", _uniform(rng, (c_in, 4 * hidden), hidden, dt))
        store.add(f"{prefix}.lstm_{direction}.w_hh", _uniform(rng, (hidden, 4 * hidden), hidden, dt))
        bias = np.zeros(4 * hidden)
        bias[hidden : 2 * hidden] = 1.0
        store.add(f"{prefix}.lstm_{direction}.bias", bias)


def _add_dense(store, rng, name, c_in, c_out, kernel=1):
    store.add(f"{name}.weight", _uniform(rng, (kernel, c_in, c_out), kernel * c_in, store.dtype))
    store.add(f"{name}.bias", np.zeros(c_out))


def _run_encoder(store: ParamStore, prefix, ids, layers, residual):
    x = ag.gather_rows(store[f"{prefix}.embedding"], ids)
    for i in range(layers):
        y = ag.tanh(ag.conv1d(x, store[f"{prefix}.conv{i}.weight"], store[f"{prefix}.conv{i}.bias"]))
        x = ag.add(x, y) if residual and x.shape[1] == y.shape[1] else y
    fwd = ag.lstm(
        ag.linear(x, store[f"{prefix}.lstm_fwd.w_ih"], store[f"{prefix}.lstm_fwd.bias"]),
        store[f"{prefix}.lstm_fwd.w_hh"],
    )
    xr = ag.flip_rows(x)
    bwd = ag.flip_rows(
        ag.lstm(
            ag.linear(xr, store[f"{prefix}.lstm_bwd.w_ih"], store[f"{prefix}.lstm_bwd.bias"]),
            store[f"{prefix}.lstm_bwd.w_hh"],
        )
    )
    return fwd, bwd


def _dense(store, name, x, act=True):
    y = ag.conv1d(x, store[f"{name}.weight"], store[f"{name}.bias"])
    return ag.tanh(y) if act else y


# ---------------------------------------------------------------------------
# acoustic model


@dataclass
class Predictions:
    """Per-scale predictions, ``scales[l]`` is ``N_l x n_mels`` in log-mel units."""

    scales: dict[int, Tensor] = field(default_factory=dict)
    normalized: dict[int, Tensor] = field(default_factory=dict)

    def array(self, level: int) -> np.ndarray:
        return self.scales[level].data

    def levels(self) -> list[int]:
        return sorted(self.scales, reverse=True)


def position_in_unit(durations) -> np.ndarray:
    """Relative position ``(k + 0.5) / d`` of each frame inside its phoneme."""
    d = np.asarray(durations, dtype=np.int64)
    k = np.arange(d.sum()) - np.repeat(np.cumsum(d) - d, d)
    return ((k + 0.5) / np.repeat(d, d))[:, None]


class AcousticModel:
    def __init__(self, config: ModelConfig, store: ParamStore | None = None):
        self.config = config
        if store is None:
            store = self._init_params()
        self.store = store

    # -- construction -----------------------------------------------------

    def _init_params(self) -> ParamStore:
        cfg = self.config
        rng = np.random.default_rng(cfg.seed)
        store = ParamStore(cfg.dtype)
        M = cfg.n_mels
        enc = 2 * cfg.encoder_hidden
        _add_encoder(
            store, rng, "enc", len(cfg.phones), cfg.embed_dim, cfg.conv_layers,
            cfg.conv_kernel, cfg.conv_channels, cfg.encoder_hidden,
        )
        scales = cfg.scales
        if 3 in scales:
            _add_dense(store, rng, "sent.hidden", enc, cfg.scale_hidden)
            _add_dense(store, rng, "sent.out", cfg.scale_hidden, M)
        if 2 in scales:
            c_in = enc + (M if 3 in scales else 0)
            _add_dense(store, rng, "word.hidden", c_in, cfg.scale_hidden)
            _add_dense(store, rng, "word.out", cfg.scale_hidden, M)
        if 1 in scales:
            c_in = enc + M * (len(scales) - 2)
            _add_dense(store, rng, "phone.hidden", c_in, cfg.scale_hidden, cfg.phoneme_kernel)
            _add_dense(store, rng, "phone.out", cfg.scale_hidden, M)
        cond = self.cond_dim
        H = cfg.decoder_hidden
        store.add("dec.prenet.weight", _uniform(rng, (M, cfg.prenet_dim), M, cfg.dtype))
        store.add("dec.prenet.bias", np.zeros(cfg.prenet_dim))
        store.add("dec.lstm.w_ih", _uniform(rng, (cfg.prenet_dim + cond, 4 * H), H, cfg.dtype))
        store.add("dec.lstm.w_hh", _uniform(rng, (H, 4 * H), H, cfg.dtype))
        bias = np.zeros(4 * H)
        bias[H : 2 * H] = 1.0
        store.add("dec.lstm.bias", bias)
        store.add("dec.out.weight", _uniform(rng, (H + cond, M), H + cond, cfg.dtype))
        store.add("dec.out.bias", np.zeros(M))
        store.buffers["feat_mean"] = np.zeros(M, dtype=cfg.dtype)
        store.buffers["feat_std"] = np.ones(M, dtype=cfg.dtype)
        return store

    @property
    def cond_dim(self) -> int:
        cfg = self.config
        return 2 * cfg.encoder_hidden + cfg.n_mels * (len(cfg.scales) - 1) + int(cfg.position_feature)

    def set_feature_stats(self, mean, std):
        std = np.maximum(np.asarray(std, dtype=np.float64), 1e-3)
        self.store.buffers["feat_mean"] = np.asarray(mean, dtype=self.config.dtype)
        self.store.buffers["feat_std"] = std.astype(self.config.dtype)

    def _denorm(self, z: Tensor) -> Tensor:
        return ag.add(ag.mul(z, self.store.buffers["feat_std"]), self.store.buffers["feat_mean"])

    def _norm(self, y: np.ndarray) -> np.ndarray:
        b = self.store.buffers
        return ((y - b["feat_mean"]) / b["feat_std"]).astype(self.config.dtype)

    # -- per-scale ops ----------------------------------------------------

    def encode(self, phoneme_ids):
        """Returns ``(P x 2H encoder outputs, 1 x 2H final state)``."""
        ids = np.asarray(phoneme_ids, dtype=np.int64)
        if ids.ndim != 1 or ids.size < 1:
            raise InvalidInput("need at least one phoneme id")
        if ids.min() < 0 or ids.max() >= len(self.config.phones):
            raise InvalidInput(f"phoneme id out of range [0, {len(self.config.phones)})")
        cfg = self.config
        fwd, bwd = _run_encoder(self.store, "enc", ids, cfg.conv_layers, cfg.conv_residual)
        out = ag.concat([fwd, bwd], axis=1)
        final = ag.concat([ag.gather_rows(fwd, [ids.size - 1]), ag.gather_rows(bwd, [0])], axis=1)
        return out, final

    def predict_sentence_scale(self, final_state: Tensor) -> Tensor:
        """Normalised sentence row (1 x n_mels) from the final encoder state."""
        if 3 not in self.config.scales:
            raise ModeError(f"no sentence scale in mode {self.config.mode!r}")
        h = _dense(self.store, "sent.hidden", final_state)
        return _dense(self.store, "sent.out", h, act=False)

    def predict_word_scale(self, embeddings: Tensor, phones_per_word, coarser: Tensor | None = None) -> Tensor:
        """Normalised word rows; ``coarser`` is the sentence row upsampled to words."""
        if 2 not in self.config.scales:
            raise ModeError(f"no word scale in mode {self.config.mode!r}")
        counts = np.asarray(phones_per_word, dtype=np.int64)
        if counts.min() < 1 or counts.sum() != embeddings.shape[0]:
            raise AlignmentMismatch(f"word map covers {counts.sum()} phonemes, encoder produced {embeddings.shape[0]}")
        if self.config.word_projection == "mean":
            wv = ag.segment_mean(embeddings, counts)
        else:
            wv = ag.gather_rows(embeddings, np.cumsum(counts) - 1)
        needs = 3 in self.config.scales
        if needs != (coarser is not None):
            raise AlignmentMismatch("sentence conditioning must be given exactly in sentence_mss mode")
        if coarser is not None:
            if coarser.shape[0] != counts.size:
                raise AlignmentMismatch(f"{coarser.shape[0]} sentence rows for {counts.size} words")
            wv = ag.concat([wv, coarser], axis=1)
        return _dense(self.store, "word.out", _dense(self.store, "word.hidden", wv), act=False)

    def predict_phoneme_scale(self, embeddings: Tensor, coarser: list[Tensor]) -> Tensor:
        """Normalised phoneme rows conditioned on every coarser scale (upsampled to phonemes)."""
        if 1 not in self.config.scales:
            raise ModeError(f"no phoneme scale in mode {self.config.mode!r}")
        if len(coarser) != len(self.config.scales) - 2:
            raise AlignmentMismatch("wrong number of coarser scales")
        for c in coarser:
            if c.shape[0] != embeddings.shape[0]:
                raise AlignmentMismatch(f"coarser scale has {c.shape[0]} rows, expected {embeddings.shape[0]}")
        x = ag.concat([embeddings, *coarser], axis=1)
        return _dense(self.store, "phone.out", _dense(self.store, "phone.hidden", x), act=False)

    def _frame_conditioning(self, embeddings: Tensor, durations, coarser: list[Tensor]) -> Tensor:
        d = np.asarray(durations, dtype=np.int64)
        if d.shape[0] != embeddings.shape[0]:
            raise AlignmentMismatch(f"{d.shape[0]} durations for {embeddings.shape[0]} phonemes")
        if d.min() < 1:
            raise AlignmentMismatch("durations must be >= 1")
        T = int(d.sum())
        if len(coarser) != len(self.config.scales) - 1:
            raise AlignmentMismatch("wrong number of coarser scales for the frame decoder")
        for c in coarser:
            if c.shape[0] != T:
                raise AlignmentMismatch(f"coarser scale has {c.shape[0]} rows, expected {T}")
        parts = [ag.repeat_rows(embeddings, d), *coarser]
        if self.config.position_feature:
            parts.append(ag.as_tensor(position_in_unit(d).astype(self.config.dtype)))
        return ag.concat(parts, axis=1)

    def decode_frames(self, embeddings: Tensor, durations, coarser: list[Tensor], teacher_frames=None) -> Tensor:
        """Normalised frame predictions (T x n_mels).

        With ``teacher_frames`` (log-mel, T x n_mels) the previous-frame
        input is the ground truth; otherwise predictions are fed back.
        The previous frame for ``t = 0`` is the all-zero go frame.
        """
        cond = self._frame_conditioning(embeddings, durations, coarser)
        T = cond.shape[0]
        if teacher_frames is None:
            return self._decode_free(cond)
        teacher = np.asarray(teacher_frames)
        if teacher.shape != (T, self.config.n_mels):
            raise AlignmentMismatch(f"teacher frames {teacher.shape}, expected {(T, self.config.n_mels)}")
        prev = np.zeros_like(teacher, dtype=self.config.dtype)
        prev[1:] = self._norm(teacher[:-1])
        s = self.store
        pre = ag.tanh(ag.linear(prev, s["dec.prenet.weight"], s["dec.prenet.bias"]))
        xw = ag.linear(ag.concat([pre, cond], axis=1), s["dec.lstm.w_ih"], s["dec.lstm.bias"])
        hs = ag.lstm(xw, s["dec.lstm.w_hh"])
        return ag.linear(ag.concat([hs, cond], axis=1), s["dec.out.weight"], s["dec.out.bias"])

    def _decode_free(self, cond: Tensor) -> Tensor:
        s = self.store
        P = self.config.prenet_dim
        H = self.config.decoder_hidden
        c = cond.data
        w_ih = s["dec.lstm.w_ih"].data
        w_out = s["dec.out.weight"].data
        cond_in = c @ w_ih[P:] + s["dec.lstm.bias"].data
        cond_out = c @ w_out[H:] + s["dec.out.bias"].data
        w_pre, b_pre = s["dec.prenet.weight"].data, s["dec.prenet.bias"].data
        w_hh = s["dec.lstm.w_hh"].data
        dt = self.config.dtype
        h = np.zeros(H, dtype=dt)
        cell = np.zeros(H, dtype=dt)
        prev = np.zeros(self.config.n_mels, dtype=dt)
        out = np.zeros((c.shape[0], self.config.n_mels), dtype=dt)
        for t in range(c.shape[0]):
            pre = np.tanh(prev @ w_pre + b_pre)
            h, cell = kernels.lstm_step(pre @ w_ih[:P] + cond_in[t], h, cell, w_hh)
            out[t] = h @ w_out[:H] + cond_out[t]
            prev = out[t]
        return Tensor(out)

    # -- full forward -----------------------------------------------------

    def forward(self, phoneme_ids, phones_per_word, durations, teacher_frames=None, perturb=None) -> Predictions:
        """Run every scale coarse to fine.

        ``perturb`` maps a scale index to an array added to that scale's
        prediction (log-mel units) before finer scales consume it.
        """
        perturb = perturb or {}
        cfg = self.config
        d = np.asarray(durations, dtype=np.int64)
        ppw = np.asarray(phones_per_word, dtype=np.int64)
        T = int(d.sum())
        P = d.shape[0]
        word_frames = kernels.segment_sum(d[:, None], ppw)[:, 0] if 2 in cfg.scales else None
        emb, final = self.encode(phoneme_ids)
        if emb.shape[0] != P:
            raise AlignmentMismatch(f"{P} durations for {emb.shape[0]} phonemes")
        preds = Predictions()

        def finish(level, z):
            if level in perturb:
                delta = np.asarray(perturb[level], dtype=cfg.dtype) / self.store.buffers["feat_std"]
                z = ag.add(z, delta)
            preds.normalized[level] = z
            preds.scales[level] = self._denorm(z)
            return z

        # coarser predictions upsampled to (words, phonemes, frames)
        to_words, to_phones, to_frames = [], [], []
        if 3 in cfg.scales:
            z3 = finish(3, self.predict_sentence_scale(final))
            to_words.append(ag.repeat_rows(z3, [ppw.size]))
            to_phones.append(ag.repeat_rows(z3, [P]))
            to_frames.append(ag.repeat_rows(z3, [T]))
        if 2 in cfg.scales:
            z2 = finish(2, self.predict_word_scale(emb, ppw, to_words[0] if to_words else None))
            to_phones.append(ag.repeat_rows(z2, ppw))
            to_frames.append(ag.repeat_rows(z2, word_frames))
        if 1 in cfg.scales:
            z1 = finish(1, self.predict_phoneme_scale(emb, to_phones))
            to_frames.append(ag.repeat_rows(z1, d))
        finish(0, self.decode_frames(emb, d, to_frames, teacher_frames))
        return preds


def mss_loss(preds: Predictions, targets: ScaleHierarchy, reduction: str = "mean"):
    """Total loss and per-scale terms; total is the plain sum over scales, finest first."""
    per_scale = {}
    for level in sorted(preds.scales):
        try:
            target = targets.level(level).mel.frames
        except KeyError:
            raise AlignmentMismatch(f"targets have no scale {level}") from None
        pred = preds.scales[level]
        if pred.shape != target.shape:
            raise AlignmentMismatch(f"scale {level}: prediction {pred.shape} vs target {target.shape}")
        per_scale[level] = ag.squared_error(pred, target.astype(pred.data.dtype), reduction)
    total = ag.add_scalars([per_scale[l] for l in sorted(per_scale)])
    return total, per_scale


# ---------------------------------------------------------------------------
# duration model


def round_durations(pred_frames) -> np.ndarray:
    """Round half up, then clamp to at least one frame."""
    x = np.asarray(pred_frames, dtype=np.float64)
    return np.maximum(1, np.floor(x + 0.5)).astype(np.int64)


def duration_loss(pred, truth) -> float:
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise InvalidInput(f"duration shapes differ: {pred.shape} vs {truth.shape}")
    return float(np.mean((pred - truth) ** 2))


class DurationModel:
    """Embedding, convolutions and a bidirectional LSTM; predicts log frames per phoneme."""

    def __init__(self, config: DurationConfig, store: ParamStore | None = None):
        self.config = config
        if store is None:
            cfg = config
            rng = np.random.default_rng(cfg.seed)
            store = ParamStore(cfg.dtype)
            _add_encoder(
                store, rng, "dur", len(cfg.phones), cfg.embed_dim, cfg.conv_layers,
                cfg.conv_kernel, cfg.conv_channels, cfg.encoder_hidden,
            )
            _add_dense(store, rng, "dur.head", 2 * cfg.encoder_hidden, 1)
        self.store = store

    def forward(self, phoneme_ids) -> Tensor:
        """Log-duration per phoneme, shape ``P x 1``."""
        ids = np.asarray(phoneme_ids, dtype=np.int64)
        if ids.ndim != 1 or ids.size < 1:
            raise InvalidInput("need at least one phoneme id")
        if ids.min() < 0 or ids.max() >= len(self.config.phones):
            raise InvalidInput("phoneme id out of range")
        cfg = self.config
        fwd, bwd = _run_encoder(self.store, "dur", ids, cfg.conv_layers, cfg.conv_residual)
        return _dense(self.store, "dur.head", ag.concat([fwd, bwd], axis=1), act=False)

    def loss(self, phoneme_ids, durations) -> Tensor:
        target = np.log(np.asarray(durations, dtype=np.float64))[:, None]
        return ag.squared_error(self.forward(phoneme_ids), target.astype(self.config.dtype))

    def predict_frames(self, phoneme_ids) -> np.ndarray:
        """Real-valued frame predictions (before rounding)."""
        return np.exp(self.forward(phoneme_ids).data[:, 0].astype(np.float64))

    def predict_durations(self, phoneme_ids) -> np.ndarray:
        return round_durations(self.predict_frames(phoneme_ids))


# ---------------------------------------------------------------------------
# checkpoints


def checkpoint_bytes(config, store: ParamStore) -> bytes:
    cfg_bytes = config_json(config)
    out = [CKPT_MAGIC, hashlib.sha256(cfg_bytes).digest(), struct.pack("<I", len(cfg_bytes)), cfg_bytes]
    arrays = store.arrays()
    out.append(struct.pack("<I", len(arrays)))
    for name, arr in arrays.items():
        nb = name.encode("utf-8")
        out.append(struct.pack("<I", len(nb)) + nb)
        out.append(struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        out.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return b"".join(out)


def parse_checkpoint(buf: bytes):
    """Returns ``(config, {name: float64 array})``."""
    if buf[:8] != CKPT_MAGIC:
        raise CheckpointError("not an MSSCKPT1 checkpoint (bad magic)")
    if len(buf) < 44:
        raise CheckpointError("checkpoint is truncated")
    digest = buf[8:40]
    try:
        (n_cfg,) = struct.unpack_from("<I", buf, 40)
        pos = 44
        cfg_bytes = buf[pos : pos + n_cfg]
        pos += n_cfg
        if hashlib.sha256(cfg_bytes).digest() != digest:
            raise CheckpointError("checkpoint config digest mismatch")
        config = config_from_dict(json.loads(cfg_bytes.decode("utf-8")))
        (n_t,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        arrays = {}
        for _ in range(n_t):
            (n_name,) = struct.unpack_from("<I", buf, pos)
            pos += 4
            name = buf[pos : pos + n_name].decode("utf-8")
            pos += n_name
            (rank,) = struct.unpack_from("<I", buf, pos)
            pos += 4
            dims = struct.unpack_from(f"<{rank}I", buf, pos)
            pos += 4 * rank
            count = int(np.prod(dims)) if rank else 1
            if pos + 8 * count > len(buf):
                raise CheckpointError("truncated checkpoint")
            arrays[name] = np.frombuffer(buf, dtype="<f8", count=count, offset=pos).reshape(dims).copy()
            pos += 8 * count
    except (struct.error, UnicodeDecodeError, json.JSONDecodeError, InvalidInput, TypeError) as e:
        raise CheckpointError(f"corrupt checkpoint: {e}") from None
    if pos != len(buf):
        raise CheckpointError("trailing bytes after checkpoint tensors")
    return config, arrays


def save_checkpoint(path, model):
    Path(path).write_bytes(checkpoint_bytes(model.config, model.store))


def load_checkpoint(path, expect_mode: str | None = None):
    """Load an acoustic or duration model; ``expect_mode`` guards against mix-ups."""
    try:
        buf = Path(path).read_bytes()
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from None
    config, arrays = parse_checkpoint(buf)
    if expect_mode is not None and config.mode != normalize_mode(expect_mode):
        raise CheckpointError(f"{path}: checkpoint mode {config.mode!r}, requested {normalize_mode(expect_mode)!r}")
    model = DurationModel(config) if isinstance(config, DurationConfig) else AcousticModel(config)
    model.store.load_arrays(arrays)
    return model
