"""Figure rendering for the CLI report paths (Agg backend, file output)."""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def training_curves(log, path):
    """Loss components and beta over training steps."""
    steps = [r["step"] for r in log]
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
    ax1.plot(steps, [r["recon"] for r in log], label="reconstruction")
    ax1.plot(steps, [r["kl_raw"] for r in log], label="KL (raw)")
    ax1.plot(steps, [r["kl_hinged"] for r in log], label="KL (hinged)")
    ax1.plot(steps, [r["total"] for r in log], label="total", alpha=0.6)
    ax1.set_ylabel("nats / sentence")
    ax1.legend(loc="upper right", fontsize=8)
    ax2.plot(steps, [r["beta"] for r in log], color="tab:red")
    ax2.set_ylabel("beta")
    ax2.set_xlabel("step")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def fewshot_curve(results_by_backbone, path):
    """Accuracy vs examples-per-class, one line per backbone."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for name, results in results_by_backbone.items():
        sizes = sorted(results)
        means = [results[s][0] for s in sizes]
        stds = [results[s][1] for s in sizes]
        ax.errorbar(sizes, means, yerr=stds, marker="o", capsize=3, label=name)
    ax.set_xscale("log")
    ax.set_xlabel("labelled examples per class")
    ax.set_ylabel("test accuracy")
    ax.set_ylim(0, 1)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def gan_curves(log, path):
    steps = [r["step"] for r in log]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(steps, [r["d_loss"] for r in log], label="discriminator")
    ax.plot(steps, [r["g_loss"] for r in log], label="generator")
    ax.axhline(2 * np.log(2), color="gray", ls="--", lw=0.8,
               label="D loss at equilibrium")
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
