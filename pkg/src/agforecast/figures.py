"""Matplotlib renderings written next to the delimited report files."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .evaluation import ALL_METHODS, EvalReport, SweepTable

_BUCKETS = [("top3_low", "low"), ("top3_medium", "medium"),
            ("top3_high", "high"), ("top3_utas", "unseen")]


def plot_report(report: EvalReport, path: str | Path) -> None:
    """Grouped bars: top-3 stage accuracy per severity bucket and method."""
    methods = [m for m in ALL_METHODS if m in report.methods]
    fig, ax = plt.subplots(figsize=(8, 4.5))
    width = 0.8 / len(_BUCKETS)
    for b, (attr, label) in enumerate(_BUCKETS):
        xs, ys = [], []
        for i, method in enumerate(methods):
            value = getattr(report.methods[method], attr)
            if value is not None:
                xs.append(i + b * width)
                ys.append(value)
        ax.bar(xs, ys, width=width, label=label)
    ax.set_xticks([i + 1.5 * width for i in range(len(methods))])
    ax.set_xticklabels(methods)
    ax.set_ylabel("top-3 stage accuracy")
    ax.set_ylim(0, 1)
    ax.legend(title="true severity", fontsize=8)
    ax.set_title("Next-action prediction accuracy")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_sweep(table: SweepTable, path: str | Path) -> None:
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for method in [m for m in ALL_METHODS if m in table.rows]:
        pairs = [(v, y) for v, y in zip(table.values, table.rows[method])
                 if y is not None]
        if pairs:
            ax.plot([p[0] for p in pairs], [p[1] for p in pairs],
                    marker="o", label=method)
    ax.set_xlabel(table.param)
    if table.kind == "runtime":
        ax.set_yscale("log")
        ax.set_ylabel("mean prediction runtime (s)")
    else:
        ax.set_ylabel("avg top-3 stage accuracy")
        ax.set_ylim(0, 1)
    ax.legend(fontsize=8)
    ax.set_title(f"{table.kind} vs {table.param}")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_replay(summaries: Sequence, path: str | Path) -> None:
    """Attack-graph growth across replay windows."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    xs = [s.index for s in summaries]
    ax.plot(xs, [s.ag_count for s in summaries], marker="o",
            label="attack graphs")
    ax.plot(xs, [s.mean_vertices for s in summaries], marker="s",
            label="mean vertices")
    ax.plot(xs, [s.mean_edges for s in summaries], marker="^",
            label="mean edges")
    ax.set_xlabel("window")
    ax.set_ylabel("count")
    ax.legend(fontsize=8)
    ax.set_title("Evolving attack graphs per replay window")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
