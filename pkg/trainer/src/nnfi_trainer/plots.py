"""Figures from sweep report CSVs: accuracy curves, majority histograms,
per-element accuracy bars."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

LABEL_NAMES = ("T-shirt/top", "Trouser", "Pullover", "Dress", "Coat",
               "Sandal", "Shirt", "Sneaker", "Bag", "Ankle boot")


def read_report_csv(path):
    """Parse a sweep report CSV into (baseline_row, rows)."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
    if not rows:
        raise ValueError(f"{path}: report CSV has no data rows")
    parsed = []
    for row in rows:
        hist = [int(row[f"hist_{i}"]) for i in range(10)]
        parsed.append({"index": int(row["index"]),
                       "accuracy": float(row["accuracy"]),
                       "memory_effect_rate": float(row["memory_effect_rate"]),
                       "histogram": hist})
    baseline = [r for r in parsed if r["index"] == -1]
    sweep = [r for r in parsed if r["index"] != -1]
    if not baseline or not sweep:
        raise ValueError(f"{path}: expected a baseline row (index -1) plus sweep rows")
    return baseline[0], sweep


def plot_accuracy_curve(csv_path, out_path, title="Accuracy vs last processed kernel"):
    """Line plot of accuracy against the swept loop index (early-exit style)."""
    baseline, rows = read_report_csv(csv_path)
    xs = [r["index"] for r in rows]
    ys = [r["accuracy"] * 100 for r in rows]
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(xs, ys, marker="o", markersize=3, label="faulted")
    ax.axhline(baseline["accuracy"] * 100, color="tab:red", linestyle="--",
               label=f"baseline {baseline['accuracy'] * 100:.0f}%")
    ax.set_xlabel("last processed index")
    ax.set_ylabel("accuracy [%]")
    ax.set_ylim(0, 100)
    ax.set_title(title)
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path)
    plt.close(fig)
    return Path(out_path)


def plot_majority_histograms(csv_path, out_path,
                             title="Output label counts when faulting biases"):
    """Grid of per-label prediction histograms, one panel per swept neuron."""
    _, rows = read_report_csv(csv_path)
    n = len(rows)
    ncols = 2
    nrows = (n + ncols - 1) // ncols
    fig, axes = plt.subplots(nrows, ncols, figsize=(10, 3 * nrows),
                             squeeze=False)
    for panel, row in enumerate(rows):
        ax = axes[panel // ncols][panel % ncols]
        ax.bar(range(10), row["histogram"], color="tab:blue")
        ax.set_title(f"fault on neuron #{row['index']} "
                     f"(accuracy {row['accuracy'] * 100:.0f}%)")
        ax.set_xticks(range(10))
        ax.set_xticklabels(LABEL_NAMES, rotation=60, fontsize=7)
        ax.set_ylabel("count")
    for panel in range(n, nrows * ncols):
        axes[panel // ncols][panel % ncols].axis("off")
    fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(out_path)
    plt.close(fig)
    return Path(out_path)


def plot_relu_bars(csv_path, out_path,
                   title="Accuracy when skipping one ReLU reset"):
    """Accuracy per faulted element index, with the baseline as a line."""
    baseline, rows = read_report_csv(csv_path)
    xs = [r["index"] for r in rows]
    ys = [r["accuracy"] * 100 for r in rows]
    fig, ax = plt.subplots(figsize=(8, 4))
    ax.bar(xs, ys, color="tab:blue", label="faulted")
    ax.axhline(baseline["accuracy"] * 100, color="tab:red", linestyle="--",
               label=f"baseline {baseline['accuracy'] * 100:.0f}%")
    ax.set_xlabel("faulted element index")
    ax.set_ylabel("accuracy [%]")
    ax.set_ylim(0, 100)
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path)
    plt.close(fig)
    return Path(out_path)
