"""Matplotlib renderings of run outputs, written next to the CSV/JSON files."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def loss_trace_figure(traces: dict[str, list[float]], path, title="training loss"):
    fig, ax = plt.subplots(figsize=(6, 4))
    for name, values in traces.items():
        ax.plot(values, label=name, lw=1.2)
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.set_title(title)
    ax.legend()
    return _save(fig, path)


def alpha_bar_figure(alphas, path, title="learned convolution weights"):
    fig, ax = plt.subplots(figsize=(4.5, 3.5))
    names = ["features", "1-hop", "2-hop"]
    ax.bar(names, np.asarray(alphas), color=["#4878d0", "#ee854a", "#6acc64"])
    ax.set_ylim(0, 1)
    ax.set_ylabel("weight")
    ax.set_title(title)
    for i, a in enumerate(alphas):
        ax.text(i, a + 0.02, f"{a:.3f}", ha="center", fontsize=9)
    return _save(fig, path)


def proxy_scatter_figure(pairs, rho, path, title="separability index vs accuracy"):
    arr = np.asarray(pairs, dtype=float)
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.scatter(arr[:, 0], arr[:, 1], s=18, alpha=0.7)
    finite = np.isfinite(arr[:, 0])
    if finite.sum() >= 2 and np.ptp(arr[finite, 0]) > 0:
        coef = np.polyfit(arr[finite, 0], arr[finite, 1], 1)
        xs = np.linspace(arr[finite, 0].min(), arr[finite, 0].max(), 50)
        ax.plot(xs, np.polyval(coef, xs), "r--", lw=1.2, label="least squares")
        ax.legend()
    ax.set_xlabel("separability index")
    ax.set_ylabel("probe accuracy")
    ax.set_title(f"{title} (spearman rho = {rho:.3f})")
    return _save(fig, path)


def ch_comparison_figure(before, after, path, title="separability before/after refinement"):
    fig, ax = plt.subplots(figsize=(4, 3.5))
    ax.bar(["before", "after"], [before, after], color=["#999999", "#4878d0"])
    ax.set_ylabel("Calinski-Harabasz index")
    ax.set_title(title)
    for i, v in enumerate([before, after]):
        ax.text(i, v * 1.01, f"{v:.1f}", ha="center", fontsize=9)
    return _save(fig, path)


def theory_curves_figure(grid, cs_values, lcs_values, path, title="separability vs w"):
    fig, ax = plt.subplots(figsize=(5.5, 4))
    ax.plot(grid, cs_values, "o-", color="#4878d0", label="class separability", ms=3)
    ax.set_xlabel("convolution weight w")
    ax.set_ylabel("class separability", color="#4878d0")
    ax2 = ax.twinx()
    ax2.plot(grid, lcs_values, "s-", color="#ee854a", label="latent-class separability", ms=3)
    ax2.set_ylabel("latent-class separability", color="#ee854a")
    ax.set_title(title)
    return _save(fig, path)


def accuracy_bar_figure(per_seed: dict[int, float], path, title="probe accuracy by seed"):
    fig, ax = plt.subplots(figsize=(5.5, 3.5))
    seeds = list(per_seed.keys())
    accs = [per_seed[s] for s in seeds]
    ax.bar([str(s) for s in seeds], accs, color="#4878d0")
    mean = float(np.mean(accs))
    ax.axhline(mean, color="r", ls="--", lw=1, label=f"mean = {mean:.3f}")
    ax.set_xlabel("seed")
    ax.set_ylabel("test accuracy")
    ax.set_ylim(0, 1)
    ax.set_title(title)
    ax.legend()
    return _save(fig, path)
