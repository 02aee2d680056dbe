"""Objective metrics against oracle targets.

All scales are predicted with oracle durations; the frame level is run
free (predictions fed back), as at synthesis time.  The cepstral distance
applies an orthonormal DCT to each log-mel frame and compares
coefficients 1..n_ceps, scaled like mel-cepstral distortion.
"""

from __future__ import annotations

import json
from functools import lru_cache
from importlib import resources

import numpy as np

from msspec.model import AcousticModel, DurationModel
from msspec.training import DatasetIndex, targets_for


@lru_cache(maxsize=4)
def _dct_matrix(n: int) -> np.ndarray:
    k = np.arange(n)[:, None]
    j = np.arange(n)[None, :]
    mat = np.sqrt(2.0 / n) * np.cos(np.pi * (j + 0.5) * k / n)
    mat[0] /= np.sqrt(2.0)
    return mat


def cepstral_distance(pred: np.ndarray, target: np.ndarray, n_ceps: int = 24) -> float:
    """Mean per-frame ``(10 / ln 10) * sqrt(2 * sum_k (c_k - c'_k)^2)``, k = 1..n_ceps."""
    dct = _dct_matrix(pred.shape[1])
    diff = (pred - target) @ dct.T
    diff = diff[:, 1 : n_ceps + 1]
    return float(np.mean(10.0 / np.log(10.0) * np.sqrt(2.0 * np.sum(diff * diff, axis=1))))


def evaluate_system(dataset: DatasetIndex, acoustic: AcousticModel, duration: DurationModel | None = None,
                    name: str = "") -> dict:
    per_scale: dict[str, list[float]] = {}
    ceps, dur_err = [], []
    for ex in dataset.examples():
        targets = targets_for(ex, acoustic.config.mode)
        ids = ex.utterance.phoneme_ids(acoustic.config.phones)
        preds = acoustic.forward(ids, ex.utterance.phonemes_per_word(), ex.durations.as_array())
        for level in preds.levels():
            err = float(np.mean((preds.array(level) - targets.level(level).mel.frames) ** 2))
            per_scale.setdefault(f"L{level}", []).append(err)
        ceps.append(cepstral_distance(preds.array(0), ex.mel.frames))
        if duration is not None:
            d_hat = duration.predict_durations(ex.utterance.phoneme_ids(duration.config.phones))
            dur_err.append(float(np.mean(np.abs(d_hat - ex.durations.as_array()))))
    mse = {k: float(np.mean(v)) for k, v in sorted(per_scale.items())}
    return {
        "mode": acoustic.config.mode,
        "checkpoint": name,
        "per_scale_mse": mse,
        "frame_mse": mse["L0"],
        "cepstral_distance": float(np.mean(ceps)),
        "duration_mae": float(np.mean(dur_err)) if dur_err else None,
    }


def _flat(system: dict) -> dict:
    out = {f"per_scale_mse.{k}": v for k, v in system["per_scale_mse"].items()}
    for key in ("frame_mse", "cepstral_distance", "duration_mae"):
        if system[key] is not None:
            out[key] = system[key]
    return out


def build_report(dataset: DatasetIndex, systems: dict[str, tuple]) -> dict:
    """``systems`` maps a label to ``(acoustic, duration_or_None, checkpoint_name)``.

    With two systems, ``deltas`` holds second minus first for every metric
    both report.
    """
    report = {"n_utterances": len(dataset), "systems": {}}
    for label, (acoustic, duration, ckpt) in systems.items():
        report["systems"][label] = evaluate_system(dataset, acoustic, duration, ckpt)
    labels = list(report["systems"])
    if len(labels) == 2:
        a, b = (_flat(report["systems"][k]) for k in labels)
        report["deltas"] = {k: b[k] - a[k] for k in a if k in b}
    return report


def report_schema() -> dict:
    return json.loads(resources.files("msspec").joinpath("data/eval_report.schema.json").read_text(encoding="utf-8"))


def validate_report(report: dict):
    import jsonschema

    jsonschema.validate(report, report_schema())


def format_table(report: dict) -> str:
    labels = list(report["systems"])
    rows = sorted({k for lab in labels for k in _flat(report["systems"][lab])})
    width = max(len(r) for r in rows) + 2
    lines = ["metric".ljust(width) + "".join(f"{lab:>14}" for lab in labels)
             + ("" if "deltas" not in report else f"{'delta':>14}")]
    for r in rows:
        cells = []
        for lab in labels:
            v = _flat(report["systems"][lab]).get(r)
            cells.append(f"{v:14.5f}" if v is not None else f"{'-':>14}")
        if "deltas" in report:
            d = report["deltas"].get(r)
            cells.append(f"{d:14.5f}" if d is not None else f"{'-':>14}")
        lines.append(r.ljust(width) + "".join(cells))
    return "\n".join(lines)
