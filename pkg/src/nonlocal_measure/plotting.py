"""Figures written next to CLI reports."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "axes.labelsize": 11,
    "xtick.direction": "in",
    "ytick.direction": "in",
    "xtick.top": True,
    "ytick.right": True,
    "legend.frameon": False,
    "figure.dpi": 100,
}

# keep PNG bytes free of version strings and timestamps
_METADATA = {"Software": None}


def _save(fig, path) -> None:
    fig.tight_layout()
    fig.savefig(path, metadata=_METADATA)
    plt.close(fig)


def termination_figure(stats, path) -> None:
    rounds = np.arange(1, stats.max_rounds + 1)
    observed = [stats.frequency(r) for r in rounds]
    expected = [stats.law.per_round(r) for r in rounds]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.bar(rounds, observed, color="0.7", label=f"simulated ({stats.trials} runs)")
        ax.plot(rounds, expected, "k.-", lw=1, label="1/N, then 1/M per round")
        ax.set_yscale("log")
        ax.set_xlabel("round of first undistorted teleportation")
        ax.set_ylabel("fraction of runs")
        ax.set_title(f"N = {stats.law.n_outcomes}, M = {stats.law.m_outcomes}, p = {stats.p_value:.3f}")
        ax.legend()
        _save(fig, path)


def resources_figure(budget, path) -> None:
    rounds = np.arange(1, budget.rounds + 1)
    cumulative = np.cumsum([float(p) for p in budget.pairs_per_round])
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.semilogy(rounds, [float(p) for p in budget.pairs_per_round], "ko-", label="per round")
        ax.semilogy(rounds, cumulative, "s--", color="0.5", label="cumulative")
        ax.set_xlabel("round")
        ax.set_ylabel("EPR pairs")
        ax.set_xticks(rounds)
        ax.legend()
        _save(fig, path)


def distribution_figure(empirical, born, path, title: str = "") -> None:
    keys = sorted(set(empirical.probs) | set(born.probs))
    x = np.arange(len(keys))
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.bar(x - 0.2, [empirical[k] for k in keys], 0.4, color="0.6", label="decoded")
        ax.bar(x + 0.2, [born[k] for k in keys], 0.4, color="k", label="Born rule")
        ax.set_xticks(x, [f"{k:g}" for k in keys])
        ax.set_xlabel("eigenvalue")
        ax.set_ylabel("probability")
        if title:
            ax.set_title(title)
        ax.legend()
        _save(fig, path)
