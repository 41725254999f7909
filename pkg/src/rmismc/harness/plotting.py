"""Static figures written next to the CSV output."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def plot_mse_vs_cost(table: list[dict], slopes: dict, path: Path, title: str = "") -> Path:
    """Log-log MSE against mean cost, one line per method, fitted slope in the legend."""
    fig, ax = plt.subplots(figsize=(5.5, 4.2))
    methods = list(dict.fromkeys(row["method"] for row in table))
    for name in methods:
        rows = [r for r in table if r["method"] == name and r["mse"] > 0]
        if not rows:
            continue
        cost = np.array([r["mean_cost"] for r in rows])
        mse = np.array([r["mse"] for r in rows])
        fit = slopes.get(name)
        label = name if fit is None else f"{name}: {fit['slope']:.3f}"
        (line,) = ax.loglog(cost, mse, "o-", label=label)
        if fit is not None:
            xs = np.array([cost.min(), cost.max()])
            ax.loglog(xs, 2.0 ** (fit["intercept"] + fit["slope"] * np.log2(xs)), ":", color=line.get_color())
    ax.set_xlabel("cost (abstract units)")
    ax.set_ylabel("MSE")
    if title:
        ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_rates(reports, path: Path, title: str = "") -> Path:
    """log2 of mean and second moment of increments against level, per sweep."""
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.8))
    for rep in reports:
        a = rep.stats.alphas
        x = np.arange(1, len(a) + 1)
        axes[0].plot(x, np.log2(np.abs(rep.stats.mean_phi)), "o-", label=f"{rep.direction}: s={rep.s:.2f}")
        axes[1].plot(x, np.log2(rep.stats.second_phi), "o-", label=f"{rep.direction}: beta={rep.beta:.2f}")
    axes[0].set_ylabel("log2 |mean increment|")
    axes[1].set_ylabel("log2 second moment")
    for ax in axes:
        ax.set_xlabel("level above start")
        ax.grid(True, alpha=0.3)
        ax.legend(fontsize=8)
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
