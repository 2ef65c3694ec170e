"""Per-epoch CSV logs, bench CSV, and the figures rendered alongside them."""

import csv

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

EPOCH_FIELDS = ["epoch", "train_loss", "holdout_loss", "holdout_acc", "lr"]
BENCH_FIELDS = ["kernel", "rows", "cols", "reps", "ns_per_gemv", "bytes_model"]


def write_epoch_csv(path, reports):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(EPOCH_FIELDS)
        for r in reports:
            writer.writerow([r.epoch, f"{r.train_loss:.8g}", f"{r.holdout_loss:.8g}",
                             f"{r.holdout_acc:.6g}", f"{r.lr:.8g}"])


def write_bench_csv(path, rows):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(BENCH_FIELDS)
        for r in rows:
            writer.writerow([r.kernel, r.rows, r.cols, r.reps,
                             f"{r.ns_per_gemv:.6g}", r.bytes_model])


def plot_convergence(reports, path, title="training convergence"):
    """Loss curves with holdout accuracy on a twin axis, written as an image file."""
    epochs = [r.epoch for r in reports]
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.plot(epochs, [r.train_loss for r in reports], label="train loss", color="tab:blue")
    ax.plot(epochs, [r.holdout_loss for r in reports], label="holdout loss", color="tab:orange")
    ax.set_xlabel("epoch")
    ax.set_ylabel("cross-entropy")
    ax.set_title(title)
    ax2 = ax.twinx()
    ax2.plot(epochs, [r.holdout_acc for r in reports], label="holdout acc",
             color="tab:green", linestyle="--")
    ax2.set_ylabel("holdout accuracy")
    ax2.set_ylim(0.0, 1.02)
    lines, labels = ax.get_legend_handles_labels()
    lines2, labels2 = ax2.get_legend_handles_labels()
    ax.legend(lines + lines2, labels + labels2, loc="center right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def plot_bench(rows, path):
    """Bar chart of gemv latency per kernel, annotated with model bytes."""
    fig, ax = plt.subplots(figsize=(7, 4))
    names = [r.kernel for r in rows]
    times = [r.ns_per_gemv / 1e3 for r in rows]
    bars = ax.bar(names, times, color=["tab:gray", "tab:blue", "tab:green"][:len(rows)])
    for bar, r in zip(bars, rows):
        ax.annotate(f"{r.bytes_model / 1024:.0f} KiB",
                    (bar.get_x() + bar.get_width() / 2, bar.get_height()),
                    ha="center", va="bottom", fontsize=8)
    ax.set_ylabel("us per gemv")
    if rows:
        ax.set_title(f"gemv kernels, {rows[0].rows}x{rows[0].cols}, {rows[0].reps} reps")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
