"""Per-scale spectrogram figures: one row per scale, oracle left, prediction right."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from msspec.multiscale import LEVEL_NAMES, ScaleHierarchy, boundaries  # noqa: E402


def _panel(ax, level, title, vmin, vmax):
    edges = np.concatenate(([0], boundaries(level.alignment)))
    mesh = ax.pcolormesh(edges, np.arange(level.mel.n_mels + 1), level.mel.frames.T,
                         vmin=vmin, vmax=vmax, cmap="magma", shading="flat", rasterized=False)
    if level.level > 0:
        ax.set_xticks(edges)
        ax.set_xticklabels([str(e) if k in (0, len(edges) - 1) else "" for k, e in enumerate(edges)], fontsize=6)
        for e in edges[1:-1]:
            ax.axvline(e, color="white", lw=0.4, alpha=0.6)
    ax.set_title(title, fontsize=8)
    ax.set_ylabel("mel band", fontsize=7)
    ax.tick_params(labelsize=6)
    return mesh


def plot_hierarchy(oracle: ScaleHierarchy, out_path, predicted: ScaleHierarchy | None = None):
    """Write a figure with one row per scale, frame scale at the top.

    Unit boundaries are marked on every coarse-scale panel.  The file type
    follows the suffix of ``out_path`` (``.svg`` or ``.png``).
    """
    levels = sorted(oracle.level_indices())
    cols = 1 if predicted is None else 2
    values = [lv.mel.frames for lv in oracle.levels]
    if predicted is not None:
        values += [lv.mel.frames for lv in predicted.levels]
    vmin = float(min(v.min() for v in values))
    vmax = float(max(v.max() for v in values))
    with plt.rc_context({"svg.hashsalt": "msspec", "svg.fonttype": "path"}):
        fig, axes = plt.subplots(len(levels), cols, figsize=(5 * cols, 1.9 * len(levels)), squeeze=False)
        for row, l in enumerate(levels):
            name = LEVEL_NAMES.get(l, f"scale {l}")
            lv = oracle.level(l)
            _panel(axes[row, 0], lv, f"oracle, scale {l} ({name}), {lv.n_units} vectors", vmin, vmax)
            if predicted is not None:
                pv = predicted.level(l)
                _panel(axes[row, 1], pv, f"predicted, scale {l} ({name}), {pv.n_units} vectors", vmin, vmax)
        for ax in axes[-1]:
            ax.set_xlabel("frames (unit boundaries marked)", fontsize=7)
        fig.tight_layout()
        out = Path(out_path)
        out.parent.mkdir(parents=True, exist_ok=True)
        meta = {"Date": None} if out.suffix.lower() == ".svg" else {"Software": None}
        fig.savefig(out, metadata=meta)
        plt.close(fig)
    return out
