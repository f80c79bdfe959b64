"""Figures for study reports (matplotlib, Agg backend, files only)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "lines.linewidth": 1.4,
    "lines.markersize": 4,
}


def plot_study_posteriors(result, path, criterion=None, unadjusted=False) -> Path:
    """One panel per generating model: posterior of each candidate against N."""
    cfg = result.config
    grid = result.grid(criterion, unadjusted)
    n_panels = len(cfg.generating)
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, n_panels, figsize=(2.4 * n_panels, 2.6), sharey=True, squeeze=False)
        for ax, gen in zip(axes[0], cfg.generating):
            for cand in cfg.candidates:
                ys = [grid[(gen, n)][cand][1] for n in cfg.segments]
                style = "-o" if cand == gen else "--."
                ax.plot(cfg.segments, np.asarray(ys, dtype=float), style, label=cand)
            ax.set_xscale("log", base=2)
            ax.set_xticks(cfg.segments)
            ax.set_xticklabels([str(n) for n in cfg.segments], rotation=45)
            ax.set_ylim(-0.02, 1.02)
            ax.set_title(f"generating {gen}")
            ax.set_xlabel("N")
        axes[0][0].set_ylabel("posterior")
        axes[0][-1].legend(loc="center left", bbox_to_anchor=(1.0, 0.5), frameon=False)
        fig.tight_layout()
        path = Path(path)
        fig.savefig(path, dpi=120, metadata={"Software": None})
        plt.close(fig)
    return path
