"""Figure rendering for the CLI report path.

The delimited files written by evaluation.render_report stay the machine
contract; these PNGs are the human-facing companions: a marked confusion
matrix heatmap, per-class CMC curves, and the warm-up latency picture.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .evaluation import BLUE, GREEN, RED, EvaluationReport

_MARKING_COLORS = {GREEN: "#1a9641", BLUE: "#2b83ba", RED: "#d7191c", "untested": "#888888"}


def render_confusion_figure(report: EvaluationReport, path) -> None:
    names = report.class_names
    k = len(names)
    matrix = report.confusion_top1
    fig, ax = plt.subplots(figsize=(7.0, 6.0))
    ax.imshow(matrix, cmap="Blues")
    for i in range(k):
        for j in range(k):
            if matrix[i, j]:
                ax.text(j, i, str(int(matrix[i, j])), ha="center", va="center", fontsize=8)
    for i in range(k):
        color = _MARKING_COLORS[report.markings[i]]
        ax.add_patch(plt.Rectangle((i - 0.5, i - 0.5), 1, 1, fill=False,
                                   edgecolor=color, linewidth=2.2))
    ax.set_xticks(range(k), names, rotation=45, ha="right", fontsize=8)
    ax.set_yticks(range(k), names, fontsize=8)
    ax.set_xlabel("predicted (rank 1)")
    ax.set_ylabel("true class")
    ax.set_title("Confusion matrix (top 1); diagonal marked by accuracy band")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def render_cmc_figure(report: EvaluationReport, path) -> None:
    names = report.class_names
    k = len(names)
    ranks = np.arange(1, k + 1)
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    for c, curve in sorted(report.cmc_by_class.items()):
        ax.plot(ranks, curve, marker="o", markersize=3, linewidth=1, label=names[c])
    ax.plot(ranks, report.cmc, color="black", linewidth=2.2, label="overall")
    ax.set_xticks(ranks)
    ax.set_ylim(0.0, 1.05)
    ax.set_xlabel("rank")
    ax.set_ylabel("cumulative accuracy")
    ax.set_title("CMC curves")
    ax.legend(fontsize=7, ncols=2)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def render_timing_figure(report: EvaluationReport, path) -> None:
    timing = report.timing
    if timing is None:
        return
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    labels = ["first sample", "steady state", "overall"]
    values = [timing.first_sample_mean, timing.steady_state_mean, timing.overall_mean]
    ax.bar(labels, values, color=["#d7191c", "#1a9641", "#2b83ba"])
    for x, v in enumerate(values):
        ax.text(x, v, f"{v:.3f}", ha="center", va="bottom", fontsize=9)
    ax.set_ylabel("mean latency (ms)")
    ax.set_title("Propagation time: warm-up vs steady state")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def render_figures(report: EvaluationReport, out_dir) -> list[str]:
    """Render all applicable figures into out_dir; returns written paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    path = out / "confusion_top1.png"
    render_confusion_figure(report, path)
    written.append(str(path))
    path = out / "cmc.png"
    render_cmc_figure(report, path)
    written.append(str(path))
    if report.timing is not None:
        path = out / "timing.png"
        render_timing_figure(report, path)
        written.append(str(path))
    return written
