"""Matplotlib figure rendering for report outputs. Agg backend, file output only."""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def save_heatmap(grid: np.ndarray, path, title: str = "", log_scale: bool = False):
    """Render a time-frequency grid (T x F) with time on the x axis."""
    data = np.log10(np.maximum(grid, 1e-12)) if log_scale else grid
    fig, ax = plt.subplots(figsize=(8, 4))
    im = ax.imshow(data.T, origin="lower", aspect="auto", cmap="magma")
    ax.set_xlabel("frame")
    ax.set_ylabel("frequency bin")
    if title:
        ax.set_title(title)
    fig.colorbar(im, ax=ax)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_metric_bars(report, path):
    """Per-utterance bar chart for each corpus-mean metric in a MetricsReport."""
    keys = sorted(report.means)
    n = max(len(keys), 1)
    fig, axes = plt.subplots(1, n, figsize=(4 * n, 3.2), squeeze=False)
    names = [e["name"] for e in report.per_utterance]
    for ax, key in zip(axes[0], keys):
        vals = [e.get(key, np.nan) for e in report.per_utterance]
        ax.bar(range(len(vals)), vals, color="tab:blue")
        ax.axhline(report.means[key], color="tab:red", ls="--", lw=1, label="mean")
        ax.set_title(key)
        ax.set_xticks(range(len(names)))
        ax.set_xticklabels(names, rotation=90, fontsize=6)
        ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_training_curve(log_entries, path):
    """Loss trajectories from JSON-lines training log entries."""
    steps = [e["step"] for e in log_entries]
    fig, ax = plt.subplots(figsize=(7, 4))
    for key in ("l_total", "l_re"):
        ax.plot(steps, [e[key] for e in log_entries], label=key)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_ablation_bars(results: dict, path):
    """Parameter counts (and metric means when present) per ablation variant."""
    names = list(results)
    params = [results[n]["param_count"] for n in names]
    metric_keys = sorted({k for r in results.values() for k in r.get("metrics", {})})
    n_panels = 1 + len(metric_keys)
    fig, axes = plt.subplots(1, n_panels, figsize=(4 * n_panels, 3.2), squeeze=False)
    axes[0][0].bar(names, params, color="tab:gray")
    axes[0][0].set_title("param count")
    for ax, key in zip(axes[0][1:], metric_keys):
        ax.bar(names, [results[n]["metrics"].get(key, np.nan) for n in names], color="tab:blue")
        ax.set_title(key)
    for ax in axes[0]:
        ax.tick_params(axis="x", rotation=45)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
