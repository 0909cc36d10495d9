"""Figure rendering for sweep and box-plot results.

Figures are a convenience layer next to the CSV files, which remain the
authoritative output.  Everything renders headless through Agg.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

_STYLE = {
    "figure.figsize": (6.4, 4.2),
    "axes.grid": True,
    "grid.alpha": 0.3,
    "legend.fontsize": 8,
}


def render_sweep(records, path):
    """Line plot with error bars, one curve per algorithm."""
    if not records:
        raise ValueError("nothing to plot")
    sweep_name = records[0].sweep_name
    metric_name = records[0].metric_name
    by_algo = {}
    for rec in records:
        by_algo.setdefault(rec.algorithm, []).append(rec)
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        for name, rows in by_algo.items():
            rows = sorted(rows, key=lambda r: r.sweep_value)
            x = [r.sweep_value for r in rows]
            y = [r.value for r in rows]
            err = [2 * r.stderr for r in rows]
            ax.errorbar(x, y, yerr=err, marker="o", markersize=3,
                        capsize=2, label=name)
        ax.set_xlabel(sweep_name)
        ax.set_ylabel(f"Normalized {metric_name}" if metric_name == "MSE"
                      else "Spectral efficiency [bit/s/Hz]")
        if metric_name == "MSE" and sweep_name == "SNR":
            ax.set_yscale("log")
        ax.legend()
        fig.tight_layout()
        fig.savefig(path, dpi=150)
        plt.close(fig)
    return path


def render_box(groups, path):
    """Horizontal box plot (1.5 IQR whiskers) of labeled sample groups."""
    if not groups:
        raise ValueError("nothing to plot")
    labels = list(groups)
    data = [groups[k] for k in labels]
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        ax.boxplot(data, vert=False, tick_labels=labels, whis=1.5)
        ax.set_xlabel("MSE")
        fig.tight_layout()
        fig.savefig(path, dpi=150)
        plt.close(fig)
    return path
