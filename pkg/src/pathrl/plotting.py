"""Matplotlib figures written next to the delimited reports."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
}
# no timestamps or version strings in the files
PNG_METADATA = {"Software": None}


def _save(fig, path: Path) -> Path:
    fig.savefig(path, dpi=120, bbox_inches="tight", metadata=PNG_METADATA)
    plt.close(fig)
    return path


def plot_metric_cis(reports: Sequence, out_dir) -> list[Path]:
    """One figure per metric: point estimate with 95% CI error bars, grouped by dataset."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for metric in sorted({r.metric for r in reports}):
        rows = [r for r in reports if r.metric == metric]
        datasets = sorted({r.dataset for r in rows})
        models = sorted({r.model for r in rows})
        width = 0.8 / max(len(models), 1)
        with plt.rc_context(STYLE):
            fig, ax = plt.subplots(figsize=(max(4.0, 1.2 * len(datasets) + 2), 3.2))
            for k, model in enumerate(models):
                xs, ys, lo, hi = [], [], [], []
                for i, ds in enumerate(datasets):
                    hit = [r for r in rows if r.dataset == ds and r.model == model]
                    if not hit:
                        continue
                    r = hit[0]
                    xs.append(i - 0.4 + width * (k + 0.5))
                    ys.append(r.point)
                    lo.append(max(r.point - r.ci_low, 0.0))
                    hi.append(max(r.ci_high - r.point, 0.0))
                ax.bar(xs, ys, width=width * 0.9, label=model)
                ax.errorbar(xs, ys, yerr=[lo, hi], fmt="none", ecolor="black", capsize=2, lw=0.8)
            ax.set_xticks(range(len(datasets)))
            ax.set_xticklabels(datasets, rotation=30, ha="right")
            ax.set_ylabel(metric)
            ax.set_ylim(0, 1.05)
            ax.legend(frameon=False, loc="upper left", bbox_to_anchor=(1.0, 1.0))
            written.append(_save(fig, out / f"ci_{metric}.png"))
    return written


def plot_average_rank(table, path) -> Path:
    models = sorted(table.average, key=lambda m: (table.average[m], m))
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 0.4 * len(models) + 1.2))
        for i, m in enumerate(models):
            per_task = [table.ranks[t][m] for t in table.ranks]
            ax.scatter(per_task, np.full(len(per_task), i), s=10, color="0.6", zorder=1)
            ax.scatter([table.average[m]], [i], s=40, color="C3", zorder=2)
        ax.set_yticks(range(len(models)))
        ax.set_yticklabels(models)
        ax.invert_yaxis()
        ax.set_xlabel("rank (1 = best); red = average")
        return _save(fig, Path(path))


def plot_training(rows: Sequence[dict], path) -> Path:
    sft = [r for r in rows if r["phase"] == "sft"]
    rl = [r for r in rows if r["phase"] == "grpo"]
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, 2, figsize=(8, 3))
        if sft:
            axes[0].plot([r["step"] for r in sft], [r["loss"] for r in sft])
        axes[0].set_title("SFT cross-entropy")
        axes[0].set_xlabel("step")
        if rl:
            steps = [r["step"] for r in rl]
            axes[1].plot(steps, [r["mean_reward"] for r in rl], lw=0.6, alpha=0.6, label="group mean")
            axes[1].plot(steps, [r["expected_reward"] for r in rl], label="expected")
            axes[1].legend(frameon=False)
        axes[1].set_title("GRPO reward")
        axes[1].set_xlabel("step")
        return _save(fig, Path(path))
