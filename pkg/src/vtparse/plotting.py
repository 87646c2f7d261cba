"""Figures written next to the tab-separated reports."""

from __future__ import annotations

from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def plot_metrics(rows: Sequence[Mapping[str, float]], path, pretrain_epochs: int = 0) -> None:
    """Per-epoch training curves in a 2x2 grid."""
    panels = [("elbo_estimate", "ELBO estimate"), ("dev_dda", "dev DDA"),
              ("slack_norm", "constraint slack"), ("mean_gamma_var", "mean var(gamma)")]
    fig, axes = plt.subplots(2, 2, figsize=(8, 6), sharex=True)
    epochs = [r["epoch"] for r in rows]
    for ax, (key, title) in zip(axes.flat, panels):
        ax.plot(epochs, [r[key] for r in rows], marker="o", ms=3)
        if pretrain_epochs:
            ax.axvspan(0.5, pretrain_epochs + 0.5, color="0.9", zorder=0)
        ax.set_title(title, fontsize=10)
        ax.grid(alpha=0.3)
    for ax in axes[1]:
        ax.set_xlabel("epoch")
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


def plot_bench(table: Mapping[str, Mapping], path) -> None:
    names = [k for k, v in table.items() if not v.get("skipped")]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.bar(names, [table[k]["tokens_per_sec"] for k in names], color="tab:blue")
    ax.set_ylabel("tokens / second")
    ax.set_xlabel("sentence length bucket")
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
