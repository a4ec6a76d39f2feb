"""Figure rendering for sweep results.

One figure per (workload, metric): the packet policy draws one curve per
init proportion over the k axis (log scale, min-max band across seeds);
baseline policies, which have no k axis, appear as dashed horizontal
reference lines.  Figures are written as PNG files next to the series
CSVs.
"""
from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .sweep import BASELINE_K, aggregate_series

METRIC_LABELS = {
    "full_utilization": "full utilization",
    "useful_utilization": "useful utilization",
    "avg_queue_time_s": "average queue time, s",
    "median_queue_time_s": "median queue time, s",
    "avg_queue_length": "average queue length",
}


def render_metric_figures(rows, metric: str, out_dir) -> list[str]:
    """Render one PNG per workload for a metric; returns the written paths."""
    series = aggregate_series(rows, metric)
    os.makedirs(out_dir, exist_ok=True)
    by_workload: dict = {}
    for (workload, policy, s_value), points in sorted(series.items()):
        by_workload.setdefault(workload, []).append((policy, s_value, points))

    paths = []
    for workload, entries in sorted(by_workload.items()):
        fig, ax = plt.subplots(figsize=(7.0, 4.5))
        drew_curve = False
        for policy, s_value, points in entries:
            if policy == "packet":
                ks = [k for k, _ in points]
                means = [sum(vals) / len(vals) for _, vals in points]
                line, = ax.plot(ks, means, marker="o", markersize=3,
                                label=f"packet, S={s_value:g}")
                if any(len(vals) > 1 for _, vals in points):
                    ax.fill_between(
                        ks,
                        [min(vals) for _, vals in points],
                        [max(vals) for _, vals in points],
                        alpha=0.15, color=line.get_color(), linewidth=0,
                    )
                drew_curve = True
            else:
                vals = [v for k, series_vals in points if k == BASELINE_K
                        for v in series_vals]
                if vals:
                    ax.axhline(sum(vals) / len(vals), linestyle="--", linewidth=1,
                               alpha=0.7, label=f"{policy}, S={s_value:g}")
        if drew_curve:
            ax.set_xscale("log")
        ax.set_xlabel("scale ratio k")
        ax.set_ylabel(METRIC_LABELS.get(metric, metric))
        ax.set_title(f"{workload}: {METRIC_LABELS.get(metric, metric)}")
        ax.grid(True, which="both", alpha=0.3)
        ax.legend(fontsize=8)
        fig.tight_layout()
        path = os.path.join(out_dir, f"{workload}_{metric}.png")
        fig.savefig(path, dpi=150)
        plt.close(fig)
        paths.append(path)
    return paths
