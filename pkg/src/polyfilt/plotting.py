"""Figures rendered next to the CSV reports."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def plot_filters(t: np.ndarray, v: np.ndarray, vhat1: np.ndarray, vhat2: np.ndarray,
                 path: str | Path, sd1: np.ndarray | None = None) -> Path:
    """Variance path against the two linear filters; optional one-sd band around the first."""
    fig, ax = plt.subplots(figsize=(10, 4.5))
    ax.plot(t, v, color="black", lw=0.9, label="$v(t)$")
    ax.plot(t, vhat1, color="tab:blue", lw=0.9, label=r"$\hat v^{(1)}(t,t)$: $\Delta Y$, $(\Delta Y)^2$")
    ax.plot(t, vhat2, color="tab:orange", lw=0.9, label=r"$\hat v^{(2)}(t,t)$: $\Delta Y$ only")
    if sd1 is not None:
        ax.fill_between(t, vhat1 - sd1, vhat1 + sd1, color="tab:blue", alpha=0.15, lw=0)
    ax.set_xlabel("t (years)")
    ax.set_ylabel("variance")
    ax.legend(loc="upper right", frameon=False)
    fig.tight_layout()
    path = Path(path)
    # fixed metadata keeps repeated renders byte-identical
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)
    return path
