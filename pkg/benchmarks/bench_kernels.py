"""Time the numba kernels against the pure-numpy fallbacks.

    python benchmarks/bench_kernels.py [--repeat 20] [--json out.json]

Covers segment pooling (scale targets, upsampling backward) and the LSTM
recurrence forward/backward at training-like sizes, plus one full
teacher-forced training step of the default word-level model under each
path.  Compile time is excluded by a warm-up call.
"""

from __future__ import annotations

import argparse
import json
import time

import numpy as np

from msspec import kernels


def best_of(fn, repeat: int) -> float:
    fn()  # warm-up / JIT compile
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench_segments(repeat, T=400, M=80, n_units=40):
    rng = np.random.default_rng(0)
    counts = np.diff(np.concatenate(([0], np.sort(rng.choice(np.arange(1, T), n_units - 1, replace=False)), [T])))
    x = rng.normal(size=(T, M))
    out = {}
    for name, fn in (("segment_mean", kernels.segment_mean), ("segment_sum", kernels.segment_sum)):
        out[name] = {
            "numba": best_of(lambda: fn(x, counts, use_numba=True), repeat),
            "numpy": best_of(lambda: fn(x, counts, use_numba=False), repeat),
        }
    return out


def bench_lstm(repeat, T=200, H=128):
    rng = np.random.default_rng(1)
    xw = rng.normal(size=(T, 4 * H))
    w_hh = rng.normal(scale=0.1, size=(H, 4 * H))
    dhs = rng.normal(size=(T, H))
    out = {}
    for flag, label in ((True, "numba"), (False, "numpy")):
        def step():
            fwd = kernels.lstm_forward(xw, w_hh, use_numba=flag)
            kernels.lstm_backward(dhs, w_hh, *fwd, use_numba=flag)

        out.setdefault("lstm_fwd_bwd", {})[label] = best_of(step, repeat)
    return out


def bench_train_step(repeat):
    from msspec import autograd as ag
    from msspec.dsp import MelSpectrogram
    from msspec.linguistic import DurationVector, default_lexicon, front_end
    from msspec.model import AcousticModel, ModelConfig, mss_loss
    from msspec.multiscale import build_hierarchy

    utt = front_end("he headed straight for his desk", eos_silence=True)
    rng = np.random.default_rng(2)
    d = DurationVector(tuple(int(v) for v in rng.integers(3, 12, size=utt.n_phonemes)))
    Y = MelSpectrogram(rng.normal(size=(d.total_frames, 80)))
    model = AcousticModel(ModelConfig(mode="word_mss", phones=default_lexicon().phone_set()))
    hier = build_hierarchy(Y, utt, d, "word_mss")
    ids = utt.phoneme_ids(model.config.phones)
    out = {}
    for flag, label in ((True, "numba"), (False, "numpy")):
        def step():
            kernels.USE_NUMBA = flag
            model.store.zero_grad()
            preds = model.forward(ids, utt.phonemes_per_word(), d.as_array(), teacher_frames=Y.frames)
            ag.backward(mss_loss(preds, hier)[0])

        saved = kernels.USE_NUMBA
        try:
            out.setdefault("train_step_word_mss", {})[label] = best_of(step, max(3, repeat // 4))
        finally:
            kernels.USE_NUMBA = saved
    return out


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=20)
    p.add_argument("--json", help="also write results here")
    args = p.parse_args(argv)
    if not kernels.HAVE_NUMBA:
        print("numba is not installed; only the numpy path is available")
        return 1
    results = {}
    results.update(bench_segments(args.repeat))
    results.update(bench_lstm(args.repeat))
    results.update(bench_train_step(args.repeat))
    print(f"{'kernel':<22}{'numba ms':>12}{'numpy ms':>12}{'speed-up':>10}")
    for name, r in results.items():
        print(f"{name:<22}{1e3 * r['numba']:12.3f}{1e3 * r['numpy']:12.3f}{r['numpy'] / r['numba']:10.2f}")
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(results, fh, indent=1)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
