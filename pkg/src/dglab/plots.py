"""Figure rendering for the CLI report paths (written next to the data files)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def render_value_curve(solutions, states, path: str | Path) -> Path:
    """Log-x plot of the discounted values along the grid, one line per state."""
    path = Path(path)
    lams = [s.lam for s in solutions]
    values = np.array([s.values for s in solutions])
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for k, name in enumerate(states):
        ax.plot(lams, values[:, k], marker="o", ms=3, label=name)
    ax.set_xscale("log")
    ax.invert_xaxis()
    ax.set_xlabel(r"discount factor $\lambda$")
    ax.set_ylabel(r"value $v_\lambda$")
    ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150, metadata={"Software": None})
    plt.close(fig)
    return path


def render_payoff_curves(states, t_grid, curves, v_star, path: str | Path) -> Path:
    """Cumulated payoff against the linear target t*v*, one panel per state.

    ``curves[k]`` is the list of gamma(k; t) values over ``t_grid``.
    """
    path = Path(path)
    n = len(states)
    cols = min(3, n)
    rows = -(-n // cols)
    fig, axes = plt.subplots(rows, cols, figsize=(3.2 * cols, 2.6 * rows), squeeze=False)
    ts = np.asarray(t_grid, dtype=float)
    for k, name in enumerate(states):
        ax = axes[k // cols][k % cols]
        ax.plot(ts, curves[k], marker="o", ms=3, label=r"$\gamma(t)$")
        ax.plot(ts, ts * v_star[k], ls="--", label=r"$t\,v^*$")
        ax.set_title(f"state {name}", fontsize=9)
        ax.grid(True, alpha=0.3)
        ax.legend(fontsize=7)
    for idx in range(n, rows * cols):
        axes[idx // cols][idx % cols].axis("off")
    fig.tight_layout()
    fig.savefig(path, dpi=150, metadata={"Software": None})
    plt.close(fig)
    return path
