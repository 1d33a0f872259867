"""Learning-curve figures."""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "font.size": 10,
    "axes.labelsize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
}


def figsize(width: float = 6.0) -> tuple[float, float]:
    golden = (math.sqrt(5.0) - 1.0) / 2.0
    return width, width * golden


def plot_learning_curve(table, path, label: str = "ACERAC", title: str | None = None) -> Path:
    """Mean test return with a +-1 std band; ``table`` columns are (timestep, mean, std)."""
    path = Path(path)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=figsize())
        t, mean, std = table[:, 0], table[:, 1], table[:, 2]
        ax.plot(t, mean, lw=1.5, label=label)
        ax.fill_between(t, mean - std, mean + std, alpha=0.25, lw=0)
        ax.set_xlabel("timestep")
        ax.set_ylabel("average test return")
        if title:
            ax.set_title(title)
        ax.legend(loc="lower right", frameon=False)
        fig.tight_layout()
        fig.savefig(path, dpi=120)
        plt.close(fig)
    return path
