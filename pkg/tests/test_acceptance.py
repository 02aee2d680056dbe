"""Acceptance criteria 1-10, one test per criterion.

Each test prints a ``[acceptance N] PASS|FAIL`` line and the terminal
summary repeats the table at the end of the run.
"""

import json
import time

import numpy as np
import pytest

from msspec import autograd as ag
from msspec.cli import run
from msspec.dsp import MelSpectrogram, load_mel, mel_from_bytes, mel_to_bytes, save_mel
from msspec.errors import InvalidInput
from msspec.evaluation import validate_report
from msspec.gradcheck import check_gradients
from msspec.linguistic import DurationVector, Utterance, default_lexicon, front_end, load_durations, word_durations
from msspec.model import checkpoint_bytes, load_checkpoint, mss_loss, save_checkpoint
from msspec.multiscale import build_generic, build_hierarchy, load_hierarchy, pool_scale, pool_scale_weighted
from msspec.synthetic import FIG3_TEXT, fig3_fixture_dir, generate_corpus
from msspec.training import DatasetIndex, TrainConfig, targets_for, train_acoustic

from conftest import small_acoustic, small_duration, small_example

MODES = ("baseline", "word_mss", "sentence_mss")


def naive_pool(Y, counts):
    out, start = [], 0
    for c in counts:
        acc = np.zeros(Y.shape[1])
        for j in range(start, start + c):
            acc = acc + Y[j]
        out.append(acc / c)
        start += c
    return np.array(out)


def random_partition(rng, T):
    cuts = np.sort(rng.choice(np.arange(1, T), size=rng.integers(0, T), replace=False)) if T > 1 else []
    return np.diff(np.concatenate(([0], cuts, [T]))).astype(int).tolist()


def test_criterion_01_pool_oracle(acceptance):
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    mismatches = 0
    for _ in range(1000):
        T = int(rng.integers(1, 51))
        M = int(rng.integers(1, 5))
        Y = rng.normal(size=(T, M))
        a = random_partition(rng, T)
        if not np.array_equal(pool_scale(Y, a).frames, naive_pool(Y, a)):
            mismatches += 1
    dt = time.perf_counter() - t0
    ok = acceptance(1, mismatches == 0 and dt < 10, "pool_scale equals naive loop oracle bitwise on 1000 cases",
                    f"{mismatches} mismatches, {dt:.2f} s")
    assert ok


def test_criterion_02_nesting(acceptance):
    rng = np.random.default_rng(2)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(1000):
        n_words = int(rng.integers(1, 8))
        ppw = rng.integers(1, 5, size=n_words)
        index = tuple(int(w) for w, n in enumerate(ppw) for _ in range(n))
        utt = Utterance("t", tuple(f"w{i}" for i in range(n_words)), tuple("p" for _ in index), index)
        d = DurationVector(tuple(int(x) for x in rng.integers(1, 8, size=len(index))))
        Y = rng.normal(size=(d.total_frames, int(rng.integers(1, 5))))
        words = pool_scale(Y, word_durations(utt, d)).frames
        phones = pool_scale(Y, d.durations).frames
        worst = max(worst, float(np.abs(pool_scale_weighted(phones, d.durations, ppw) - words).max()))
    dt = time.perf_counter() - t0
    ok = acceptance(2, worst <= 1e-9 and dt < 10, "word targets equal duration-weighted phoneme means",
                    f"max err {worst:.1e}, {dt:.2f} s")
    assert ok


def test_criterion_03_figure_structure(acceptance, tmp_path):
    import matplotlib.pyplot as plt

    from msspec import plotting

    t0 = time.perf_counter()
    fx = fig3_fixture_dir()
    args = ["--mel", str(fx / "mel.mel"), "--text", FIG3_TEXT, "--durations", str(fx / "durations.txt")]
    assert run(["--mode", "word-mss", "build-scales", *args, str(tmp_path / "oracle")]) == 0
    oracle = load_hierarchy(tmp_path / "oracle")
    counts = oracle.row_counts()

    # predicted panel: a briefly trained word-level model run with oracle durations
    utt = front_end(FIG3_TEXT, eos_silence=True)
    d = load_durations(fx / "durations.txt", utt)
    from msspec.training import Example

    ds = DatasetIndex.from_examples([Example("fig3", utt, d, load_mel(fx / "mel.mel"))])
    from msspec.model import ModelConfig

    mcfg = ModelConfig(mode="word_mss", phones=default_lexicon().phone_set(), embed_dim=16, conv_channels=16,
                       encoder_hidden=16, scale_hidden=32, prenet_dim=16, decoder_hidden=32)
    model, _ = train_acoustic(ds, TrainConfig(mode="word_mss", max_steps=60), mcfg)
    assert run(["synth", "--text", FIG3_TEXT, "--acoustic", _save(model, tmp_path / "m.ckpt"), "--durations",
                str(fx / "durations.txt"), "--no-wav", str(tmp_path / "pred")]) == 0

    shapes = {}
    orig = plt.subplots

    def spy(*a, **k):
        fig, axes = orig(*a, **k)
        shapes["axes"] = axes.shape
        return fig, axes

    plotting.plt.subplots = spy
    try:
        rc = run(["plot", str(tmp_path / "oracle"), "--pred", str(tmp_path / "pred" / "scales"),
                  "--out", str(tmp_path / "fig3.svg")])
    finally:
        plotting.plt.subplots = orig
    dt = time.perf_counter() - t0
    ok = (counts[2] == 7 and counts[1] == 29 and rc == 0 and shapes.get("axes") == (3, 2)
          and (tmp_path / "fig3.svg").stat().st_size > 0 and dt < 60)
    acceptance(3, ok, "figure sentence gives 7 word and 29 phoneme vectors; 3x2 oracle/predicted plot",
               f"N2={counts[2]} N1={counts[1]} T={counts[0]}, axes {shapes.get('axes')}, {dt:.1f} s")
    assert ok


def _save(model, path):
    save_checkpoint(path, model)
    return str(path)


def test_criterion_04_gradients(acceptance):
    """Default (full-size) configurations, 80 mel bands, double precision."""
    from msspec.model import AcousticModel, DurationConfig, DurationModel, ModelConfig

    t0 = time.perf_counter()
    phones = default_lexicon().phone_set()
    rng = np.random.default_rng(4)
    utt = front_end("he headed for his desk", eos_silence=True)
    d = DurationVector(tuple(int(x) for x in rng.integers(2, 6, size=utt.n_phonemes)))
    Y = MelSpectrogram(rng.normal(size=(d.total_frames, 80)))
    ids = utt.phoneme_ids(phones)
    worst = {}
    n_tensors = 0
    for mode in MODES:
        model = AcousticModel(ModelConfig(mode=mode, phones=phones, seed=11))
        model.set_feature_stats(rng.normal(size=80), rng.uniform(0.5, 2.0, size=80))
        hier = build_generic(Y, [], "baseline") if mode == "baseline" else build_hierarchy(Y, utt, d, mode)

        def loss():
            preds = model.forward(ids, utt.phonemes_per_word(), d.as_array(), teacher_frames=Y.frames)
            return mss_loss(preds, hier)[0]

        res = check_gradients(loss, model.store.params, n_coords=10, seed=3)
        n_tensors += len(res)
        worst[mode] = max(r.max_rel_error for r in res)
    dur = DurationModel(DurationConfig(phones=phones, seed=5))
    res = check_gradients(lambda: dur.loss(ids, d.as_array()), dur.store.params, n_coords=10, seed=3)
    n_tensors += len(res)
    worst["duration"] = max(r.max_rel_error for r in res)
    dt = time.perf_counter() - t0
    ok = all(v < 1e-4 for v in worst.values()) and dt < 600
    acceptance(4, ok, "analytic vs central-difference gradients, every tensor, 10 coords, rel err < 1e-4",
               ", ".join(f"{k} {v:.1e}" for k, v in worst.items()) + f"; {n_tensors} tensors, {dt:.1f} s")
    assert ok


def test_criterion_05_dependency_order(acceptance):
    t0 = time.perf_counter()
    failures = []
    checks = 0
    for mode in MODES:
        model = small_acoustic(mode, seed=12)
        utt, d, Y = small_example("the cat sat on a mat", seed=5)
        ids, ppw, dur = utt.phoneme_ids(model.config.phones), utt.phonemes_per_word(), d.as_array()
        for teacher in (Y.frames, None):
            base = model.forward(ids, ppw, dur, teacher_frames=teacher)
            levels = base.levels()
            for level in (3, 2, 1, 0):
                out = model.forward(ids, ppw, dur, teacher_frames=teacher, perturb={level: np.full(6, 0.5)})
                for other in levels:
                    same = np.array_equal(out.array(other), base.array(other))
                    checks += 1
                    if other < level and level in levels and same:
                        failures.append((mode, level, other, "finer unchanged"))
                    if (other > level or level not in levels) and other != level and not same:
                        failures.append((mode, level, other, "coarser changed"))
    dt = time.perf_counter() - t0
    ok = not failures and dt < 60
    acceptance(5, ok, "perturbing scale l changes every finer scale and no coarser one, all modes",
               f"{checks} checks, {len(failures)} violations, {dt:.1f} s")
    assert ok, failures


def test_criterion_06_overfit(acceptance, tmp_path):
    t0 = time.perf_counter()
    ds = DatasetIndex.from_manifest(generate_corpus(tmp_path, n_utts=1, seed=0))
    ex = ds.example(0)
    model, _ = train_acoustic(ds, TrainConfig(mode="word_mss", max_steps=2000, seed=0))
    targets = targets_for(ex, "word_mss")
    ids, ppw, d = ex.utterance.phoneme_ids(model.config.phones), ex.utterance.phonemes_per_word(), ex.durations.as_array()
    _, per = mss_loss(model.forward(ids, ppw, d, teacher_frames=ex.mel.frames), targets)
    tf = {l: t.item() for l, t in per.items()}
    free = model.forward(ids, ppw, d)
    synth_mse = float(np.mean((free.array(0) - ex.mel.frames) ** 2))
    dt = time.perf_counter() - t0
    ok = all(v < 0.02 for v in tf.values()) and synth_mse < 0.05 and dt < 600
    acceptance(6, ok, "word_mss overfit on one utterance (2000 steps): every scale MSE < 0.02, synthesis MSE < 0.05",
               ", ".join(f"L{l} {v:.4f}" for l, v in sorted(tf.items())) + f", synth {synth_mse:.4f}, {dt:.0f} s")
    assert ok


def test_criterion_07_loss_bookkeeping(acceptance, tmp_path):
    ds = DatasetIndex.from_manifest(generate_corpus(tmp_path / "c", n_utts=2, seed=7, max_words=5))
    from msspec.model import ModelConfig

    counts, worst = {}, 0.0
    for mode in ("word_mss", "sentence_mss"):
        mcfg = ModelConfig(mode=mode, phones=ds.lexicon.phone_set(), embed_dim=16, conv_channels=16,
                           encoder_hidden=16, scale_hidden=16, prenet_dim=16, decoder_hidden=16)
        train_acoustic(ds, TrainConfig(mode=mode, max_steps=20), mcfg, out_dir=tmp_path / mode)
        recs = [json.loads(l) for l in (tmp_path / mode / "acoustic_log.jsonl").read_text().splitlines()]
        counts[mode] = {len(r["losses"]) for r in recs}
        worst = max(worst, max(abs(r["total"] - sum(r["losses"].values())) for r in recs))
    ok = counts == {"word_mss": {3}, "sentence_mss": {4}} and worst <= 1e-12
    acceptance(7, ok, "logged total equals sum of per-scale terms; 3 terms word_mss, 4 sentence_mss",
               f"terms {counts}, max |total - sum| {worst:.1e}")
    assert ok


def _random_text(rng, vocab):
    words = list(rng.choice(vocab, size=int(rng.integers(1, 13))))
    if rng.random() < 0.3:
        words.insert(int(rng.integers(0, len(words) + 1)), "".join(rng.choice(list("qxzjvk"), size=3)))
    return " ".join(words).capitalize() + rng.choice([".", "!", "?", ""])


@pytest.fixture(scope="module")
def pipeline_run(tmp_path_factory):
    """gen-synthetic -> extract -> build-scales -> train (500 steps, all modes) -> eval."""
    root = tmp_path_factory.mktemp("e2e")
    t0 = time.perf_counter()
    rcs = {"gen-synthetic": run(["--seed", "0", "gen-synthetic", str(root / "corpus"), "--n", "10"])}
    rcs["extract"] = run(["extract", str(root / "corpus" / "wav"), str(root / "mels")])
    manifest = [json.loads(l) for l in (root / "corpus" / "manifest.jsonl").read_text().splitlines()]
    rcs["build-scales"] = max(
        run(["--mode", "word-mss", "build-scales", "--mel", str(root / "mels" / f"{r['id']}.mel"), "--text", r["text"],
             "--durations", str(root / "corpus" / r["durations"]), str(root / "scales" / r["id"])])
        for r in manifest
    )
    for mode in MODES:
        (root / f"{mode}.toml").write_text(
            f'manifest = "corpus/manifest.jsonl"\nmel_dir = "mels"\nout_dir = "run_{mode}"\n'
            f'mode = "{mode}"\nmax_steps = 500\nduration_steps = 500\nseed = 0\n'
        )
        rcs[f"train {mode}"] = run(["train", str(root / f"{mode}.toml")])
    rcs["eval"] = run(["eval", "--manifest", str(root / "corpus" / "manifest.jsonl"), "--mel-dir", str(root / "mels"),
                       "--acoustic", str(root / "run_baseline" / "acoustic.ckpt"),
                       "--compare", str(root / "run_word_mss" / "acoustic.ckpt"),
                       "--duration", str(root / "run_word_mss" / "duration.ckpt"), "--out", str(root / "report.json")])
    return root, rcs, time.perf_counter() - t0


def test_criterion_08_two_step_inference(acceptance, pipeline_run, tmp_path):
    root, _, _ = pipeline_run
    ck = root / "run_word_mss"
    dur = load_checkpoint(ck / "duration.ckpt")
    rng = np.random.default_rng(8)
    vocab = default_lexicon().words()
    bad, nondet = [], 0
    t0 = time.perf_counter()
    for i in range(100):
        text = _random_text(rng, vocab)
        args = ["synth", "--text", text, "--acoustic", str(ck / "acoustic.ckpt"), "--duration", str(ck / "duration.ckpt"),
                "--gl-iters", "2"]
        assert run([*args, str(tmp_path / f"a{i}")]) == 0
        ids = front_end(text, eos_silence=True).phoneme_ids(dur.config.phones)
        expected = int(dur.predict_durations(ids).sum())
        got = load_mel(tmp_path / f"a{i}" / "mel.mel").n_frames
        if got != expected:
            bad.append((text, got, expected))
        if i < 20:
            assert run([*args, str(tmp_path / f"b{i}")]) == 0
            for name in ("mel.mel", "audio.wav", "durations.txt"):
                nondet += (tmp_path / f"a{i}" / name).read_bytes() != (tmp_path / f"b{i}" / name).read_bytes()
    dt = time.perf_counter() - t0
    ok = not bad and nondet == 0
    acceptance(8, ok, "synth frame count equals sum of rounded predicted durations on 100 texts; reruns identical",
               f"{len(bad)} count mismatches, {nondet} differing files over 20 reruns, {dt:.1f} s")
    assert ok, bad


def test_criterion_09_format_round_trips(acceptance, tmp_path):
    frames = np.random.default_rng(9).normal(size=(17, 80)).astype(np.float32).astype(np.float64)
    save_mel(tmp_path / "a.mel", MelSpectrogram(frames))
    mel_exact = np.array_equal(load_mel(tmp_path / "a.mel").frames, frames) and \
        mel_to_bytes(load_mel(tmp_path / "a.mel")) == (tmp_path / "a.mel").read_bytes()
    ckpt_exact = True
    for model in (small_acoustic("sentence_mss", seed=3), small_duration(seed=3)):
        save_checkpoint(tmp_path / "m.ckpt", model)
        back = load_checkpoint(tmp_path / "m.ckpt")
        ckpt_exact &= checkpoint_bytes(back.config, back.store) == (tmp_path / "m.ckpt").read_bytes()
        ckpt_exact &= all(np.array_equal(back.store.arrays()[k], v) for k, v in model.store.arrays().items())

    fx = fig3_fixture_dir()
    buf = bytearray((fx / "mel.mel").read_bytes())
    buf[:8] = b"MELSPECX"
    (tmp_path / "bad.mel").write_bytes(bytes(buf))
    mel_rc = run(["--mode", "word-mss", "build-scales", "--mel", str(tmp_path / "bad.mel"), "--text", FIG3_TEXT,
                  "--durations", str(fx / "durations.txt"), str(tmp_path / "o")])
    save_checkpoint(tmp_path / "w.ckpt", small_acoustic("word_mss"))
    buf = bytearray((tmp_path / "w.ckpt").read_bytes())
    buf[:8] = b"MSSCKPTX"
    (tmp_path / "bad.ckpt").write_bytes(bytes(buf))
    (tmp_path / "d.txt").write_text("\n".join(["3"] * front_end("a cat", eos_silence=True).n_phonemes))
    ck_rc = run(["synth", "--text", "a cat", "--acoustic", str(tmp_path / "bad.ckpt"), "--durations",
                 str(tmp_path / "d.txt"), "--no-wav", str(tmp_path / "s")])
    with pytest.raises(InvalidInput):
        mel_from_bytes(b"XXXXXXXX" + mel_to_bytes(MelSpectrogram(frames))[8:])
    ok = mel_exact and ckpt_exact and mel_rc == 3 and ck_rc == 4
    acceptance(9, ok, "MELSPEC1 and MSSCKPT1 round trips bit-exact; corrupt magic exits 3 / 4",
               f"mel exact {mel_exact}, ckpt exact {ckpt_exact}, exit codes {mel_rc}/{ck_rc}")
    assert ok


def test_criterion_10_end_to_end(acceptance, pipeline_run):
    root, rcs, dt = pipeline_run
    report = json.loads((root / "report.json").read_text()) if (root / "report.json").exists() else {}
    schema_ok = True
    try:
        validate_report(report)
    except Exception:
        schema_ok = False
    word = report.get("systems", {}).get("B", {})
    finite = bool(word) and word.get("mode") == "word_mss" and sorted(word["per_scale_mse"]) == ["L0", "L1", "L2"] \
        and all(np.isfinite(v) for v in word["per_scale_mse"].values()) \
        and np.isfinite(word["frame_mse"]) and np.isfinite(word["cepstral_distance"])
    ok = all(rc == 0 for rc in rcs.values()) and schema_ok and finite and dt < 1800
    per = ", ".join(f"{k} {v:.4f}" for k, v in word.get("per_scale_mse", {}).items())
    acceptance(10, ok, "synthetic corpus pipeline (500 steps x 3 modes) completes; word_mss metrics finite; schema valid",
               f"exit codes {sorted(set(rcs.values()))}, word_mss {per}, {dt:.0f} s")
    assert ok, rcs
