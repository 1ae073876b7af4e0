"""Figure rendering for evaluation reports.

The eval command writes a PNG next to its delimited output: per-group metric
means as grouped bars, plus the per-video ROUGE-L F1 distribution.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from gestpipe.metrics import EvalReport


def save_report_figure(report: EvalReport, path: str | Path) -> Path:
    """Render the report figure to ``path``; empty reports get a placeholder."""
    path = Path(path)
    fig, (ax_means, ax_dist) = plt.subplots(1, 2, figsize=(10, 4))

    if report.rows:
        groups = sorted(report.group_means)
        x = np.arange(len(groups))
        width = 0.35
        bleu = [report.group_means[g].bleu4 for g in groups]
        rouge = [report.group_means[g].rouge_f1 for g in groups]
        ax_means.bar(x - width / 2, bleu, width, label="BLEU@4")
        ax_means.bar(x + width / 2, rouge, width, label="ROUGE-L F1")
        ax_means.set_xticks(x)
        ax_means.set_xticklabels(groups, rotation=20, ha="right")
        ax_means.set_ylim(0, 1)
        ax_means.set_ylabel("mean score")
        ax_means.set_title("per-group means")
        ax_means.legend()

        f1_values = [row.rouge_f1 for row in report.rows]
        ax_dist.hist(f1_values, bins=np.linspace(0, 1, 21), edgecolor="black")
        ax_dist.set_xlabel("ROUGE-L F1")
        ax_dist.set_ylabel("videos")
        ax_dist.set_title("per-video distribution")
    else:
        for ax in (ax_means, ax_dist):
            ax.text(0.5, 0.5, "no pairs", ha="center", va="center")
            ax.set_axis_off()

    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
