"""Text front end and duration ingestion.

The front end is deliberately simple: lowercase word tokenisation, lexicon
lookup, and a deterministic letter-by-letter fallback for words the lexicon
does not know.  Durations come from an external aligner and are read from
disk.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path

import numpy as np

from msspec.errors import AlignmentMismatch, InvalidDuration, InvalidInput

SIL_WORD = "<sil>"
SIL_PHONE = "sil"

_TOKEN_RE = re.compile(r"[a-z0-9]+(?:'[a-z0-9]+)*")


def letter_phone(ch: str) -> str:
    return "@" + ch


_LETTER_PHONES = tuple(letter_phone(c) for c in "abcdefghijklmnopqrstuvwxyz0123456789")


class Lexicon:
    """Immutable word -> phone sequence table."""

    def __init__(self, entries: dict[str, tuple[str, ...]]):
        self._entries = {w.lower(): tuple(p) for w, p in entries.items()}
        for w, phones in self._entries.items():
            if not phones:
                raise InvalidInput(f"lexicon entry {w!r} has no phones")

    @classmethod
    def from_text(cls, text: str) -> "Lexicon":
        entries = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            word, sep, phones = line.partition("\t")
            if not sep:
                raise InvalidInput(f"lexicon line {lineno}: expected 'word<TAB>phones'")
            entries[word.strip()] = tuple(phones.split())
        return cls(entries)

    @classmethod
    def load(cls, path) -> "Lexicon":
        return cls.from_text(Path(path).read_text(encoding="utf-8"))

    def __contains__(self, word):
        return word in self._entries

    def __len__(self):
        return len(self._entries)

    def words(self) -> list[str]:
        return sorted(self._entries)

    def lookup(self, word: str) -> tuple[str, ...]:
        word = word.lower()
        if word in self._entries:
            return self._entries[word]
        return tuple(letter_phone(c) for c in word if c != "'")

    def phone_set(self) -> tuple[str, ...]:
        """Closed symbol inventory: lexicon phones, letter fallbacks and silence."""
        phones = {p for seq in self._entries.values() for p in seq}
        phones.update(_LETTER_PHONES)
        phones.add(SIL_PHONE)
        return tuple(sorted(phones))


@lru_cache(maxsize=1)
def default_lexicon() -> Lexicon:
    text = resources.files("msspec").joinpath("data/lexicon.tsv").read_text(encoding="utf-8")
    return Lexicon.from_text(text)


@dataclass(frozen=True)
class Utterance:
    text: str
    words: tuple[str, ...]
    phonemes: tuple[str, ...]
    phoneme_word_index: tuple[int, ...]
    sentence_count: int = 1

    def __post_init__(self):
        idx = self.phoneme_word_index
        if not self.words or not self.phonemes:
            raise InvalidInput("utterance needs at least one word and one phoneme")
        if len(idx) != len(self.phonemes):
            raise InvalidInput("phoneme_word_index length differs from phoneme count")
        if idx[0] != 0 or idx[-1] != len(self.words) - 1:
            raise InvalidInput("phoneme_word_index must cover every word")
        if any(b - a not in (0, 1) for a, b in zip(idx, idx[1:])):
            raise InvalidInput("phoneme_word_index must be non-decreasing and contiguous")
        if self.sentence_count != 1:
            raise InvalidInput("only single-sentence utterances are supported")

    @property
    def n_words(self) -> int:
        return len(self.words)

    @property
    def n_phonemes(self) -> int:
        return len(self.phonemes)

    def phonemes_per_word(self) -> np.ndarray:
        return np.bincount(np.asarray(self.phoneme_word_index), minlength=self.n_words).astype(np.int64)

    def phoneme_ids(self, phone_set) -> np.ndarray:
        table = {p: i for i, p in enumerate(phone_set)}
        try:
            return np.array([table[p] for p in self.phonemes], dtype=np.int64)
        except KeyError as e:
            raise InvalidInput(f"phoneme {e.args[0]!r} is not in the model's phone set") from None


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


def front_end(text: str, lexicon: Lexicon | None = None, eos_silence: bool = False) -> Utterance:
    """Tokenise ``text`` and expand each word into phones.

    With ``eos_silence`` a trailing silence unit is appended as its own
    word holding one ``sil`` phone, so the utterance covers the closing
    pause of a recording.
    """
    if not text or not text.strip():
        raise InvalidInput("empty text")
    lexicon = default_lexicon() if lexicon is None else lexicon
    words = tokenize(text)
    if not words:
        raise InvalidInput(f"no word tokens in {text!r}")
    phonemes, index = [], []
    for w_idx, word in enumerate(words):
        phones = lexicon.lookup(word)
        phonemes.extend(phones)
        index.extend([w_idx] * len(phones))
    if eos_silence:
        words.append(SIL_WORD)
        phonemes.append(SIL_PHONE)
        index.append(len(words) - 1)
    return Utterance(text, tuple(words), tuple(phonemes), tuple(index))


@dataclass(frozen=True)
class DurationVector:
    durations: tuple[int, ...]

    def __post_init__(self):
        if not self.durations:
            raise InvalidDuration("empty duration vector")
        for i, d in enumerate(self.durations):
            if d < 1:
                raise InvalidDuration(f"duration {i} is {d}; durations must be >= 1 frame")

    @property
    def total_frames(self) -> int:
        return int(sum(self.durations))

    def __len__(self):
        return len(self.durations)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.durations, dtype=np.int64)


def parse_durations(text: str) -> list[int]:
    """Accept a JSON array or one integer per line."""
    stripped = text.strip()
    if stripped.startswith("["):
        try:
            values = json.loads(stripped)
        except json.JSONDecodeError as e:
            raise InvalidDuration(f"malformed duration array: {e}") from None
        if not isinstance(values, list):
            raise InvalidDuration("duration JSON must be a flat array")
    else:
        values = [line.strip() for line in stripped.splitlines() if line.strip()]
    out = []
    for v in values:
        try:
            f = float(v)
        except (TypeError, ValueError):
            raise InvalidDuration(f"duration {v!r} is not a number") from None
        if not np.isfinite(f) or f != int(f):
            raise InvalidDuration(f"duration {v!r} is not an integer frame count")
        out.append(int(f))
    return out


def check_durations(values, utterance: Utterance) -> DurationVector:
    values = [int(v) for v in values]
    if len(values) != utterance.n_phonemes:
        raise AlignmentMismatch(f"{len(values)} durations for {utterance.n_phonemes} phonemes")
    return DurationVector(tuple(values))


def load_durations(path, utterance: Utterance) -> DurationVector:
    return check_durations(parse_durations(Path(path).read_text(encoding="utf-8")), utterance)


def save_durations(path, d: DurationVector):
    Path(path).write_text("".join(f"{v}\n" for v in d.durations), encoding="utf-8")


def word_durations(utterance: Utterance, d: DurationVector) -> list[int]:
    if len(d) != utterance.n_phonemes:
        raise AlignmentMismatch(f"{len(d)} durations for {utterance.n_phonemes} phonemes")
    out = [0] * utterance.n_words
    for w, frames in zip(utterance.phoneme_word_index, d.durations):
        out[w] += frames
    return out


def sentence_duration(d: DurationVector) -> list[int]:
    return [d.total_frames]
