"""``msspec`` command line.

Exit codes: 0 success, 2 usage or configuration error, 3 data validation
error, 4 checkpoint problem (unreadable, corrupt, or wrong mode).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from msspec.errors import AlignmentMismatch, CheckpointError, InvalidDuration, InvalidInput, ModeError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_CKPT = 0, 2, 3, 4

log = logging.getLogger("msspec")


class UsageError(Exception):
    pass


def _mode_arg(value: str) -> str:
    from msspec.multiscale import normalize_mode

    m = normalize_mode(value)
    if m not in ("baseline", "word_mss", "sentence_mss"):
        raise argparse.ArgumentTypeError(f"mode must be baseline, word-mss or sentence-mss (got {value!r})")
    return m


def _mel_config(args):
    from msspec.pipeline import load_run_config, mel_config_from

    if args.config:
        return mel_config_from(load_run_config(args.config).get("mel"))
    from msspec.dsp import MelConfig

    return MelConfig()


# ---------------------------------------------------------------------------


def cmd_gen_synthetic(args) -> int:
    from msspec.synthetic import generate_corpus

    manifest = generate_corpus(args.out_dir, n_utts=args.n, seed=args.seed,
                               min_words=args.min_words, max_words=args.max_words, config=_mel_config(args))
    print(f"wrote {args.n} utterances, manifest {manifest}")
    return EXIT_OK


def cmd_extract(args) -> int:
    from msspec.pipeline import extract_directory

    wav_dir = Path(args.wav_dir)
    if not wav_dir.is_dir():
        print(f"error: {wav_dir} is not a directory", file=sys.stderr)
        return EXIT_USAGE
    records, failures = extract_directory(wav_dir, args.out_dir, _mel_config(args))
    if not records and not failures:
        print("error: no input files", file=sys.stderr)
        return EXIT_USAGE
    for wav, msg in failures:
        print(f"error: {wav}: {msg}", file=sys.stderr)
    print(f"extracted {len(records)} file(s) to {args.out_dir}")
    return EXIT_DATA if failures else EXIT_OK


def cmd_build_scales(args) -> int:
    from msspec.pipeline import build_scales

    if args.mode == "baseline":
        raise UsageError("build-scales needs --mode word-mss or sentence-mss")
    text = args.text if args.text is not None else Path(args.text_file).read_text(encoding="utf-8")
    try:
        h = build_scales(args.mel, text, args.durations, args.mode, args.out_dir)
    except AlignmentMismatch as e:
        print(f"alignment mismatch: {e}", file=sys.stderr)
        return EXIT_DATA
    for lv in h.levels:
        print(f"scale{lv.level}: {lv.n_units} x {lv.mel.n_mels}")
    return EXIT_OK


def cmd_train(args) -> int:
    from msspec.pipeline import train_from_config

    cfg = args.train_config or args.config
    if not cfg:
        raise UsageError("train needs a config file (--config FILE)")
    paths = train_from_config(cfg, mode=args.mode, seed=args.seed_override)
    for k, v in paths.items():
        print(f"{k}: {v}")
    return EXIT_OK


def cmd_synth(args) -> int:
    from msspec.linguistic import parse_durations
    from msspec.pipeline import load_models, save_synthesis, synthesize

    acoustic, duration = load_models(args.acoustic, args.duration, mode=args.mode)
    if duration is None and args.durations is None:
        raise UsageError("synth needs --duration CKPT or --durations FILE")
    durations = None
    if args.durations is not None:
        durations = parse_durations(Path(args.durations).read_text(encoding="utf-8"))
    result = synthesize(args.text, acoustic, duration, durations=durations, gl_iters=args.gl_iters,
                        mel_config=_mel_config(args), vocode=not args.no_wav)
    save_synthesis(result, args.out_dir)
    print(f"{result.mel.n_frames} frames ({sum(result.durations.durations)} from durations) -> {args.out_dir}")
    return EXIT_OK


def cmd_plot(args) -> int:
    from msspec.multiscale import load_hierarchy
    from msspec.plotting import plot_hierarchy

    oracle = load_hierarchy(args.oracle)
    pred = load_hierarchy(args.pred) if args.pred else None
    if pred is not None and sorted(pred.level_indices()) != sorted(oracle.level_indices()):
        raise InvalidInput("oracle and predicted hierarchies have different scales")
    out = plot_hierarchy(oracle, args.out, pred)
    print(f"wrote {out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    from msspec.evaluation import build_report, format_table, validate_report
    from msspec.pipeline import load_models
    from msspec.training import DatasetIndex

    dataset = DatasetIndex.from_manifest(args.manifest, mel_dir=args.mel_dir, mel_config=_mel_config(args))
    systems = {}
    acoustic, duration = load_models(args.acoustic, args.duration, mode=args.mode)
    systems["A"] = (acoustic, duration, str(args.acoustic))
    if args.compare:
        other, _ = load_models(args.compare, None)
        systems["B"] = (other, duration, str(args.compare))
    report = build_report(dataset, systems)
    validate_report(report)
    text = json.dumps(report, indent=1, sort_keys=True)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    print(format_table(report))
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="msspec", description="Multi-scale mel-spectrogram TTS toolkit")
    p.add_argument("--seed", type=int, default=None, help="random seed (default: config value or 0)")
    p.add_argument("--config", help="TOML config file")
    p.add_argument("--mode", type=_mode_arg, default=None, help="baseline | word-mss | sentence-mss")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("gen-synthetic", help="write a synthetic corpus")
    s.add_argument("out_dir")
    s.add_argument("--n", type=int, default=10)
    s.add_argument("--min-words", type=int, default=4)
    s.add_argument("--max-words", type=int, default=10)
    s.set_defaults(func=cmd_gen_synthetic)

    s = sub.add_parser("extract", help="wav directory -> MELSPEC1 files")
    s.add_argument("wav_dir")
    s.add_argument("out_dir")
    s.set_defaults(func=cmd_extract)

    s = sub.add_parser("build-scales", help="write the multi-scale targets of one utterance")
    s.add_argument("--mel", required=True)
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--text")
    g.add_argument("--text-file")
    s.add_argument("--durations", required=True)
    s.add_argument("out_dir")
    s.set_defaults(func=cmd_build_scales)

    s = sub.add_parser("train", help="train acoustic and duration models")
    s.add_argument("train_config", nargs="?", help="config file (alternative to --config)")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("synth", help="text -> per-scale mels + wav")
    s.add_argument("--text", required=True)
    s.add_argument("--acoustic", required=True)
    s.add_argument("--duration")
    s.add_argument("--durations", help="oracle duration file; skips the duration model")
    s.add_argument("--gl-iters", type=int, default=60)
    s.add_argument("--no-wav", action="store_true")
    s.add_argument("out_dir")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("plot", help="figure of oracle (and predicted) scales")
    s.add_argument("oracle")
    s.add_argument("--pred")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_plot)

    s = sub.add_parser("eval", help="objective metrics against oracle targets")
    s.add_argument("--manifest", required=True)
    s.add_argument("--mel-dir")
    s.add_argument("--acoustic", required=True)
    s.add_argument("--compare", help="second acoustic checkpoint to compare against")
    s.add_argument("--duration")
    s.add_argument("--out")
    s.set_defaults(func=cmd_eval)
    return p


def _setup_logging(verbose: int):
    level = os.environ.get("MSSPEC_LOG")
    if level is None:
        level = ["WARNING", "INFO", "DEBUG"][min(verbose, 2)]
    logging.basicConfig(level=level.upper() if isinstance(level, str) else level,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code not in (0, None) else EXIT_OK
    _setup_logging(args.verbose)
    args.seed_override = args.seed
    if args.seed is None:
        args.seed = 0
    from msspec.pipeline import ConfigError

    try:
        return args.func(args)
    except (UsageError, ConfigError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except CheckpointError as e:
        print(f"checkpoint error: {e}", file=sys.stderr)
        return EXIT_CKPT
    except (InvalidInput, InvalidDuration, AlignmentMismatch, ModeError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
