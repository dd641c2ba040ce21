"""Figure rendering for diagnostics and training artifacts.

Each CSV the CLI writes has a matching figure rendered next to it.  All
functions take already-computed statistics; nothing here recomputes.
"""

from __future__ import annotations

import numpy as np

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .diagnostics import MembraneStats, SamplingTheory, SpiketrainStats  # noqa: E402


def plot_membrane_histogram(
    path, stats: MembraneStats, theory: SamplingTheory | None = None
) -> None:
    """Pooled membrane-potential histogram, optionally with the normal overlay
    implied by the target (mean 0, std sigma_u)."""
    fig, ax = plt.subplots(figsize=(5, 3.5))
    widths = np.diff(stats.bin_edges)
    density = stats.counts / (stats.counts.sum() * widths)
    ax.bar(stats.bin_edges[:-1], density, width=widths, align="edge",
           color="tab:blue", alpha=0.7, label="measured")
    if theory is not None:
        sigma = float(np.sqrt(theory.nakagami_spread))
        x = np.linspace(stats.bin_edges[0], stats.bin_edges[-1], 400)
        ax.plot(x, np.exp(-0.5 * (x / sigma) ** 2) / (sigma * np.sqrt(2 * np.pi)),
                "k--", label="target normal")
    ax.axvline(1.0, color="tab:red", lw=1, label="threshold")
    ax.set_xlabel("membrane potential")
    ax.set_ylabel("density")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_sigma_scatter(path, mu_hat, sigma_hat, sigma_u: float | None = None) -> None:
    """Per-neuron sampled (mu_hat, sigma_hat) scatter."""
    fig, ax = plt.subplots(figsize=(4.5, 3.5))
    ax.scatter(mu_hat, sigma_hat, s=8, alpha=0.6)
    if sigma_u is not None:
        ax.axhline(sigma_u, color="k", ls="--", lw=1, label="target")
        ax.legend(frameon=False)
    ax.set_xlabel("measured membrane mean")
    ax.set_ylabel("measured membrane std")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_rates(path, stats: SpiketrainStats) -> None:
    fig, ax = plt.subplots(figsize=(4.5, 3.5))
    ax.hist(stats.rates.reshape(-1), bins=30, color="tab:green", alpha=0.8)
    ax.set_xlabel("firing rate (Hz)")
    ax.set_ylabel("neurons")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_training_curves(path, logs) -> None:
    """Loss and accuracy per epoch for train and validation splits."""
    epochs = [l.epoch for l in logs]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8, 3.2))
    ax1.plot(epochs, [l.loss for l in logs], label="train")
    ax1.plot(epochs, [l.valid_loss for l in logs], label="valid")
    ax1.set_xlabel("epoch")
    ax1.set_ylabel("loss")
    ax1.legend(frameon=False)
    ax2.plot(epochs, [l.accuracy for l in logs], label="train")
    ax2.plot(epochs, [l.valid_accuracy for l in logs], label="valid")
    ax2.set_xlabel("epoch")
    ax2.set_ylabel("accuracy")
    ax2.set_ylim(0, 1)
    ax2.legend(frameon=False)
    n_priming = sum(1 for l in logs if l.phase == "priming")
    if n_priming:
        for ax in (ax1, ax2):
            ax.axvline(n_priming - 0.5, color="gray", ls=":", lw=1)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
