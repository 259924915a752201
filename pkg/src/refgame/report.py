"""Report rendering: summary tables plus matplotlib figures.

Reads the delimited outputs the runner emits (``runs.csv``, ILM sweep
CSVs) and renders figures next to an aggregated ``summary.csv``.  The CSV
files remain the contract; figures are a convenience view of the same
numbers.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from . import exprunner  # noqa: E402

FIGURE_DPI = 130


def _cell_key(row):
    return (row["attrs"], row["strategy"], row["stimulus"], row["V"], row["L"],
            row["batch"])


def _cell_label(key):
    attrs, strategy, stimulus, vocab, length, batch = key
    return f"{attrs}attr-{strategy[:5]}-{stimulus[:3]}-V{vocab}-L{length}-B{batch}"


def summarize_runs(rows):
    """Per-cell medians of the headline metrics."""
    cells = sorted({_cell_key(r) for r in rows})
    out = []
    for key in cells:
        sub = [r for r in rows if _cell_key(r) == key]
        ts_vals = [r["ts_train"] for r in sub if not np.isnan(r["ts_train"])]
        out.append({
            "cell": _cell_label(key),
            "n_runs": len(sub),
            "median_acc_train": float(np.median([r["acc_train"] for r in sub])),
            "median_acc_test": float(np.median([r["acc_test"] for r in sub])),
            "median_acc_gap": float(np.median([r["acc_gap"] for r in sub])),
            "median_ts_train": float(np.median(ts_vals)) if ts_vals else float("nan"),
            "n_ts_undefined": sum(r["ts_undefined"] for r in sub),
        })
    return out


def write_summary(summary, path):
    fields = ["cell", "n_runs", "median_acc_train", "median_acc_test",
              "median_acc_gap", "median_ts_train", "n_ts_undefined"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        writer.writeheader()
        for row in summary:
            writer.writerow({k: (f"{v:.6g}" if isinstance(v, float) else v)
                             for k, v in row.items()})


def _boxplot(ax, rows, key, title):
    cells = sorted({_cell_key(r) for r in rows})
    data, labels = [], []
    for cell in cells:
        vals = [r[key] for r in rows if _cell_key(r) == cell and not np.isnan(r[key])]
        if vals:
            data.append(vals)
            labels.append(_cell_label(cell))
    if not data:
        ax.set_visible(False)
        return
    ax.boxplot(data, tick_labels=labels)
    ax.set_title(title)
    ax.tick_params(axis="x", rotation=75, labelsize=6)
    ax.grid(True, alpha=0.3)


def render_run_figures(rows, out_dir):
    """Accuracy/toposim distribution figures for a set of run rows."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    fig, axes = plt.subplots(1, 2, figsize=(11, 4.5))
    _boxplot(axes[0], rows, "acc_train", "train accuracy")
    _boxplot(axes[1], rows, "acc_test", "test accuracy")
    fig.tight_layout()
    path = out / "accuracy_distributions.png"
    fig.savefig(path, dpi=FIGURE_DPI)
    plt.close(fig)
    written.append(path)

    fig, axes = plt.subplots(1, 2, figsize=(11, 4.5))
    _boxplot(axes[0], rows, "ts_train", "train topographic similarity")
    _boxplot(axes[1], rows, "ts_gap", "toposim test-train gap")
    fig.tight_layout()
    path = out / "toposim_distributions.png"
    fig.savefig(path, dpi=FIGURE_DPI)
    plt.close(fig)
    written.append(path)

    fig, ax = plt.subplots(figsize=(5.5, 4.5))
    xs = [r["ts_train"] for r in rows if not np.isnan(r["ts_train"])]
    ys = [r["acc_test"] for r in rows if not np.isnan(r["ts_train"])]
    ax.scatter(xs, ys, s=18, alpha=0.7)
    if len(xs) >= 2 and len(set(xs)) > 1:
        coeffs = np.polyfit(xs, ys, 1)
        grid = np.linspace(min(xs), max(xs), 50)
        ax.plot(grid, np.polyval(coeffs, grid), lw=1, color="tab:red")
    ax.set_xlabel("train-time topographic similarity")
    ax.set_ylabel("test-time accuracy")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    path = out / "toposim_vs_accuracy.png"
    fig.savefig(path, dpi=FIGURE_DPI)
    plt.close(fig)
    written.append(path)
    return written


def render_report(runs_csv, out_dir):
    """Full report for a runs CSV: summary.csv plus figures."""
    rows = exprunner.read_results(runs_csv)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary = summarize_runs(rows)
    write_summary(summary, out / "summary.csv")
    figures = render_run_figures(rows, out)
    return [out / "summary.csv"] + figures


def render_ilm_sweep(sweep_rows, out_dir):
    """Expressivity and stability curves for an ILM observation sweep."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rs = [row["R"] for row in sweep_rows]
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    axes[0].plot(rs, [row["E_h"] for row in sweep_rows], label="holistic")
    axes[0].plot(rs, [row["E_c"] for row in sweep_rows], label="compositional")
    axes[0].set_xlabel("observations per lifetime")
    axes[0].set_ylabel("expressivity")
    axes[0].set_xscale("log")
    axes[0].legend()
    axes[0].grid(True, alpha=0.3)
    axes[1].plot(rs, [row["S"] for row in sweep_rows], color="tab:green")
    axes[1].set_xlabel("observations per lifetime")
    axes[1].set_ylabel("relative stability of compositional language")
    axes[1].set_xscale("log")
    axes[1].set_ylim(0, 1)
    axes[1].grid(True, alpha=0.3)
    fig.tight_layout()
    path = out / "ilm_sweep.png"
    fig.savefig(path, dpi=FIGURE_DPI)
    plt.close(fig)
    return path
