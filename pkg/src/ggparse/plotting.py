"""Figures for the train / evaluate / bench reports (written to files, never shown)."""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

FIG_WIDTH = 6.4


def _figure(nrows=1, height=None):
    height = height or FIG_WIDTH * (math.sqrt(5) - 1) / 2 * nrows
    fig, axes = plt.subplots(nrows, 1, figsize=(FIG_WIDTH, height), squeeze=False)
    return fig, [ax for row in axes for ax in row]


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_training(history, path):
    """Per-epoch loss components (top) and dev metrics (bottom)."""
    epochs = [r.epoch for r in history]
    fig, (ax1, ax2) = _figure(2)
    ax1.plot(epochs, [r.loss.l_arc for r in history], label="arc")
    ax1.plot(epochs, [r.loss.l_rel for r in history], label="rel")
    ax1.plot(epochs, [r.loss.l_order for r in history], label="order")
    ax1.set_ylabel("loss / sentence")
    ax1.legend(frameon=False)
    ax2.plot(epochs, [100 * r.dev_uas for r in history], label="UAS")
    ax2.plot(epochs, [100 * r.dev_las for r in history], label="LAS")
    ax2.plot(epochs, [100 * r.dev_order_acc for r in history], label="Order Acc.")
    ax2.set_xlabel("epoch")
    ax2.set_ylabel("dev %")
    ax2.legend(frameon=False)
    return _save(fig, path)


def plot_sentence_uas(report, path, bins=20):
    fig, (ax,) = _figure()
    vals = [100 * s.uas for s in report.sentences if s.scored]
    ax.hist(vals, bins=bins, range=(0, 100), color="0.4")
    ax.set_xlabel("sentence UAS (%)")
    ax.set_ylabel("sentences")
    ax.set_title(f"UAS {100 * report.uas:.2f}  LAS {100 * report.las:.2f}")
    return _save(fig, path)


def plot_scaling(tables, path):
    """Operation counts against sentence length for each decoder, log-log.

    ``tables`` maps decoder name to the rows returned by ``benchmark_decode``.
    """
    fig, (ax,) = _figure()
    lengths = sorted({r.length for rows in tables.values() for r in rows})
    for kind, rows in tables.items():
        ax.plot([r.length for r in rows], [max(r.candidates, 1) for r in rows], "o-", label=f"{kind} candidates")
        if any(r.comparisons for r in rows):
            ax.plot([r.length for r in rows], [max(r.comparisons, 1) for r in rows], "s--",
                    label=f"{kind} sort comparisons")
    if lengths:
        ax.plot(lengths, [n * n for n in lengths], ":", color="0.5", label="n^2")
        ax.plot(lengths, [max(n * math.log2(n), 1) for n in lengths], "-.", color="0.7", label="n log2 n")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("sentence length n")
    ax.set_ylabel("operations")
    ax.legend(frameon=False, fontsize="small")
    return _save(fig, path)
