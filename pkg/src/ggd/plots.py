"""Figures rendered next to each report CSV."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def save_loss_curve(losses, path, best_epoch: int | None = None) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(np.arange(len(losses)), losses, lw=1.2)
    ax.axhline(np.log(2), color="gray", ls="--", lw=0.8, label="ln 2")
    if best_epoch is not None:
        ax.axvline(best_epoch, color="tab:red", ls=":", lw=0.8,
                   label=f"best epoch {best_epoch}")
    ax.set_xlabel("epoch")
    ax.set_ylabel("group-discrimination loss")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_epsilon_sweep(epsilons, accuracies, path) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(epsilons, accuracies, "o-", lw=1.2)
    ax.set_xlabel("epsilon (constant-summary scale)")
    ax.set_ylabel("probe test accuracy")
    ax.set_ylim(0, 1)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_ablation(modes, accuracies, path) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(modes, accuracies, color="tab:blue")
    ax.set_xlabel("aggregation")
    ax.set_ylabel("probe test accuracy")
    ax.set_ylim(0, 1)
    for i, acc in enumerate(accuracies):
        ax.text(i, acc + 0.01, f"{acc:.3f}", ha="center", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_scaling(report: dict, path) -> None:
    rows = report["rows"]
    sizes = [r["nodes"] for r in rows]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.loglog(sizes, [r["gd_epoch_seconds"] for r in rows], "o-",
              label=f"GD epoch (slope {report['gd_slope']:.2f})")
    ax.loglog(sizes, [r["pairwise_pass_seconds"] for r in rows], "s-",
              label=f"pairwise N^2 pass (slope {report['pairwise_slope']:.2f})")
    ax.set_xlabel("nodes")
    ax.set_ylabel("seconds")
    ax.grid(alpha=0.3, which="both")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_power_bench(rows, path) -> None:
    sizes = [r["nodes"] for r in rows]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.loglog(sizes, [r["seconds"] for r in rows], "o-")
    ax.set_xlabel("nodes")
    ax.set_ylabel(f"seconds for {rows[0]['power']} propagation rounds"
                  if rows else "seconds")
    ax.grid(alpha=0.3, which="both")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
