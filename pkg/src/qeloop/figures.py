"""Matplotlib renderings of the run summaries, written next to the CSV/JSON
reports: the cosine trend, the per-cycle category histogram, and the rubric
means per dimension.
"""
from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from qeloop.reporting import SummaryRecord

_CATEGORY_COLORS = {
    "High": "#2a9d8f",
    "Medium": "#e9c46a",
    "Low": "#f4a261",
    "NoMatch": "#e76f51",
}

_RUBRIC_DIMS = (
    ("clarity", "mean_clarity"),
    ("completeness", "mean_completeness"),
    ("testability", "mean_testability"),
    ("consistency", "mean_consistency"),
    ("semantic alignment", "mean_semantic_alignment"),
)


def render_summary_figures(history: Sequence[SummaryRecord], out_dir: str | Path) -> list[Path]:
    """Render the three summary charts; returns the written file paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if not history:
        return []
    cycles = [record.cycle for record in history]
    written = []

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(cycles, [r.mean_cosine for r in history], marker="o", color="#264653")
    ax.set_xlabel("cycle")
    ax.set_ylabel("mean cosine")
    ax.set_ylim(0.0, 1.05)
    ax.set_xticks(cycles)
    ax.set_title("Semantic alignment across refinement cycles")
    ax.grid(alpha=0.3)
    path = out_dir / "mean_cosine_trend.png"
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    written.append(path)

    fig, ax = plt.subplots(figsize=(6, 4))
    bottoms = [0] * len(history)
    for label, attr in (
        ("High", "count_high"), ("Medium", "count_medium"),
        ("Low", "count_low"), ("NoMatch", "count_no_match"),
    ):
        values = [getattr(r, attr) for r in history]
        ax.bar(cycles, values, bottom=bottoms, label=label, color=_CATEGORY_COLORS[label])
        bottoms = [b + v for b, v in zip(bottoms, values)]
    ax.set_xlabel("cycle")
    ax.set_ylabel("segment pairs")
    ax.set_xticks(cycles)
    ax.set_title("Match categories per cycle")
    ax.legend()
    path = out_dir / "category_histogram.png"
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    written.append(path)

    fig, ax = plt.subplots(figsize=(6, 4))
    for label, attr in _RUBRIC_DIMS:
        ax.plot(cycles, [getattr(r, attr) for r in history], marker="o", label=label)
    ax.set_xlabel("cycle")
    ax.set_ylabel("mean score")
    ax.set_ylim(1.0, 5.2)
    ax.set_xticks(cycles)
    ax.set_title("Rubric means per dimension")
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    path = out_dir / "rubric_means.png"
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    written.append(path)

    return written
