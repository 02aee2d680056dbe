import numpy as np
import pytest

from msspec.dsp import MelSpectrogram
from msspec.linguistic import DurationVector, default_lexicon, front_end
from msspec.model import AcousticModel, DurationConfig, DurationModel, ModelConfig

SMALL = dict(n_mels=6, embed_dim=8, conv_channels=8, encoder_hidden=6, scale_hidden=8,
             prenet_dim=5, decoder_hidden=7, conv_layers=2, conv_kernel=3)


def small_acoustic(mode, seed=0, **kw):
    cfg = ModelConfig(mode=mode, phones=default_lexicon().phone_set(), seed=seed, **{**SMALL, **kw})
    model = AcousticModel(cfg)
    rng = np.random.default_rng(seed + 100)
    model.set_feature_stats(rng.normal(size=cfg.n_mels), rng.uniform(0.5, 2.0, size=cfg.n_mels))
    return model


def small_duration(seed=0):
    cfg = DurationConfig(phones=default_lexicon().phone_set(), embed_dim=6, conv_channels=6, encoder_hidden=5, seed=seed)
    return DurationModel(cfg)


def small_example(text="the cat sat on a mat", n_mels=6, seed=0):
    utt = front_end(text, eos_silence=True)
    rng = np.random.default_rng(seed)
    d = DurationVector(tuple(int(x) for x in rng.integers(1, 5, size=utt.n_phonemes)))
    Y = MelSpectrogram(rng.normal(size=(d.total_frames, n_mels)))
    return utt, d, Y


@pytest.fixture(scope="session")
def lexicon():
    return default_lexicon()


# criterion number -> (passed, description, detail); filled by the acceptance suite
ACCEPTANCE: dict[int, tuple[bool, str, str]] = {}


@pytest.fixture
def acceptance():
    def record(number: int, passed: bool, description: str, detail: str = ""):
        ACCEPTANCE[number] = (bool(passed), description, detail)
        status = "PASS" if passed else "FAIL"
        line = f"[acceptance {number:2d}] {status}  {description}" + (f"  ({detail})" if detail else "")
        import sys

        print("\n" + line, file=sys.__stdout__, flush=True)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, desc, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"{n:2d}. {'PASS' if ok else 'FAIL'}  {desc}" + (f"  ({detail})" if detail else ""))
