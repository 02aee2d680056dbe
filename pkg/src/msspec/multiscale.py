"""Coarse-to-fine spectrogram targets.

A scale ``l`` is described by an alignment vector ``a`` of positive frame
counts summing to ``T``.  The target at that scale has one row per unit:
the mean of the frames ``[c[i-1], c[i])`` of the frame-level spectrogram,
where ``c`` is the cumulative sum of ``a`` and ``c[-1] = 0``.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from msspec import kernels
from msspec.dsp import MelSpectrogram, load_mel, save_mel
from msspec.errors import AlignmentMismatch, InvalidInput
from msspec.linguistic import DurationVector, Utterance, sentence_duration, word_durations

MODES = ("generic", "word_mss", "sentence_mss")

# level index -> name for the linguistic hierarchies
LEVEL_NAMES = {0: "frame", 1: "phoneme", 2: "word", 3: "sentence"}


def normalize_mode(mode: str) -> str:
    m = mode.strip().lower().replace("-", "_")
    aliases = {"word": "word_mss", "sentence": "sentence_mss", "wordmss": "word_mss", "sentencemss": "sentence_mss"}
    return aliases.get(m, m)


@dataclass(frozen=True)
class AlignmentVector:
    counts: tuple[int, ...]

    def __post_init__(self):
        counts = tuple(int(c) for c in self.counts)
        object.__setattr__(self, "counts", counts)
        if not counts:
            raise AlignmentMismatch("alignment vector must have at least one unit")
        bad = [i for i, c in enumerate(counts) if c < 1]
        if bad:
            raise AlignmentMismatch(f"alignment counts must be >= 1 (offending units {bad})")

    @classmethod
    def of(cls, counts) -> "AlignmentVector":
        if isinstance(counts, AlignmentVector):
            return counts
        if isinstance(counts, DurationVector):
            return cls(counts.durations)
        return cls(tuple(np.asarray(counts, dtype=np.int64).tolist()))

    @property
    def total(self) -> int:
        return int(sum(self.counts))

    def __len__(self):
        return len(self.counts)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.counts, dtype=np.int64)


def boundaries(a) -> np.ndarray:
    """Cumulative unit end frames ``c_k = a_0 + ... + a_k``."""
    return np.cumsum(AlignmentVector.of(a).as_array())


def _frames(Y) -> np.ndarray:
    arr = Y.frames if isinstance(Y, MelSpectrogram) else np.asarray(Y)
    if arr.ndim != 2:
        raise InvalidInput("expected a 2-D (frames x bands) matrix")
    return arr


def pool_scale(Y, a) -> MelSpectrogram:
    """Mean-pool frame rows over each unit of alignment ``a``.

    Pooling runs in float64 whatever the storage precision of ``Y``.
    """
    frames = np.asarray(_frames(Y), dtype=np.float64)
    a = AlignmentVector.of(a)
    if a.total != frames.shape[0]:
        raise AlignmentMismatch(f"alignment covers {a.total} frames, spectrogram has {frames.shape[0]}")
    shift = Y.frame_shift_ms if isinstance(Y, MelSpectrogram) else 12.5
    return MelSpectrogram(kernels.segment_mean(frames, a.as_array()), shift)


def pool_scale_weighted(S, weights, group_counts) -> np.ndarray:
    """Weighted mean of consecutive row groups of ``S``.

    Row ``i`` of ``S`` carries weight ``weights[i]``; group ``k`` spans
    ``group_counts[k]`` rows.
    """
    S = np.asarray(_frames(S), dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    g = AlignmentVector.of(group_counts).as_array()
    if w.shape[0] != S.shape[0] or g.sum() != S.shape[0]:
        raise AlignmentMismatch("weights/group counts do not match the row count")
    num = kernels.segment_sum(S * w[:, None], g)
    den = kernels.segment_sum(w[:, None], g)
    return num / den


def upsample(S, fine_counts) -> MelSpectrogram:
    """Repeat row ``i`` of ``S`` ``fine_counts[i]`` times."""
    frames = _frames(S)
    counts = AlignmentVector.of(fine_counts)
    if len(counts) != frames.shape[0]:
        raise AlignmentMismatch(f"{len(counts)} repeat counts for {frames.shape[0]} rows")
    shift = S.frame_shift_ms if isinstance(S, MelSpectrogram) else 12.5
    return MelSpectrogram(np.repeat(frames, counts.as_array(), axis=0), shift)


def unit_counts(coarse, fine) -> AlignmentVector:
    """Number of fine units inside each coarse unit.

    Both alignments are frame counts over the same ``T`` frames; every
    coarse boundary must also be a fine boundary.
    """
    coarse, fine = AlignmentVector.of(coarse), AlignmentVector.of(fine)
    if coarse.total != fine.total:
        raise AlignmentMismatch(f"alignments cover {coarse.total} and {fine.total} frames")
    fine_b = boundaries(fine)
    pos = np.searchsorted(fine_b, boundaries(coarse))
    if np.any(fine_b[np.minimum(pos, len(fine_b) - 1)] != boundaries(coarse)):
        raise AlignmentMismatch("coarse alignment is not a grouping of the fine alignment")
    return AlignmentVector(tuple(np.diff(np.concatenate(([-1], pos))).tolist()))


@dataclass
class ScaleLevel:
    level: int
    alignment: AlignmentVector
    mel: MelSpectrogram

    @property
    def n_units(self) -> int:
        return len(self.alignment)


@dataclass
class ScaleHierarchy:
    mode: str
    levels: list[ScaleLevel]  # coarsest first, frame level last

    def __post_init__(self):
        totals = {lv.alignment.total for lv in self.levels}
        if len(totals) != 1:
            raise AlignmentMismatch(f"levels disagree on the frame count: {sorted(totals)}")
        for lv in self.levels:
            if lv.mel.n_frames != len(lv.alignment):
                raise AlignmentMismatch(f"scale {lv.level}: {lv.mel.n_frames} rows for {len(lv.alignment)} units")
        idx = [lv.level for lv in self.levels]
        if idx != sorted(idx, reverse=True) or idx[-1] != 0:
            raise InvalidInput(f"levels must run from coarsest down to 0, got {idx}")

    @property
    def n_frames(self) -> int:
        return self.levels[-1].alignment.total

    @property
    def frame_level(self) -> MelSpectrogram:
        return self.levels[-1].mel

    @property
    def top_level(self) -> int:
        return self.levels[0].level

    def level(self, l: int) -> ScaleLevel:
        for lv in self.levels:
            if lv.level == l:
                return lv
        raise KeyError(l)

    def level_indices(self) -> list[int]:
        return [lv.level for lv in self.levels]

    def row_counts(self) -> dict[int, int]:
        return {lv.level: lv.n_units for lv in self.levels}


def build_generic(Y: MelSpectrogram, alignments, mode: str = "generic") -> ScaleHierarchy:
    """Hierarchy from alignments listed coarsest first (scale ``L`` .. 1)."""
    n = Y.n_frames
    top = len(alignments)
    levels = []
    for k, a in enumerate(alignments):
        a = AlignmentVector.of(a)
        levels.append(ScaleLevel(top - k, a, pool_scale(Y, a)))
    levels.append(ScaleLevel(0, AlignmentVector((1,) * n), Y))
    sizes = [lv.n_units for lv in levels]
    if any(b <= a for a, b in zip(sizes, sizes[1:])):
        warnings.warn(f"unit counts per scale are not strictly increasing: {sizes}", stacklevel=2)
    return ScaleHierarchy(mode, levels)


def linguistic_alignments(utt: Utterance, d: DurationVector, mode: str) -> list[AlignmentVector]:
    """Alignments for scales ``L`` .. 1 of the word / sentence hierarchies."""
    mode = normalize_mode(mode)
    if mode not in ("word_mss", "sentence_mss"):
        raise InvalidInput(f"linguistic hierarchy needs word_mss or sentence_mss, got {mode!r}")
    if len(d) != utt.n_phonemes:
        raise AlignmentMismatch(f"{len(d)} durations for {utt.n_phonemes} phonemes")
    aligns = [AlignmentVector(tuple(word_durations(utt, d))), AlignmentVector(d.durations)]
    if mode == "sentence_mss":
        aligns.insert(0, AlignmentVector(tuple(sentence_duration(d))))
    return aligns


def build_hierarchy(Y: MelSpectrogram, utt: Utterance, d: DurationVector, mode: str) -> ScaleHierarchy:
    mode = normalize_mode(mode)
    if d.total_frames != Y.n_frames:
        raise AlignmentMismatch(f"durations sum to {d.total_frames} frames, spectrogram has {Y.n_frames}")
    return build_generic(Y, linguistic_alignments(utt, d, mode), mode)


def save_hierarchy(h: ScaleHierarchy, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for lv in h.levels:
        save_mel(out / f"scale{lv.level}.mel", lv.mel)
    meta = {
        "mode": h.mode,
        "n_frames": h.n_frames,
        "levels": {str(lv.level): list(lv.alignment.counts) for lv in h.levels},
    }
    (out / "alignments.json").write_text(json.dumps(meta, indent=1) + "\n", encoding="utf-8")


def load_hierarchy(in_dir) -> ScaleHierarchy:
    src = Path(in_dir)
    meta_path = src / "alignments.json"
    if not meta_path.exists():
        raise InvalidInput(f"{meta_path} not found")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    levels = []
    for key in sorted(meta["levels"], key=int, reverse=True):
        path = src / f"scale{key}.mel"
        if not path.exists():
            raise InvalidInput(f"missing scale file {path}")
        levels.append(ScaleLevel(int(key), AlignmentVector(tuple(meta["levels"][key])), load_mel(path)))
    return ScaleHierarchy(meta["mode"], levels)
