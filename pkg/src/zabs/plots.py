"""Static SVG diagnostic plots (deterministic output)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_RC = {"svg.hashsalt": "zabs", "svg.fonttype": "none"}


def _save(fig, path: Path) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)


def qq_envelope(path, theoretical, observed, lower, median, upper):
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(4.5, 4.5))
        ax.plot(theoretical, lower, color="0.3", lw=0.8)
        ax.plot(theoretical, upper, color="0.3", lw=0.8)
        ax.plot(theoretical, median, color="0.3", lw=0.8, ls="--")
        ax.scatter(theoretical, np.sort(observed), s=8, color="k")
        ax.set_xlabel("Theoretical quantile")
        ax.set_ylabel("Empirical quantile")
        _save(fig, Path(path))


def residuals_vs_fitted(path, fitted, residuals):
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(4.5, 4.5))
        ax.scatter(fitted, residuals, s=8, color="k")
        for h in (-3, 0, 3):
            ax.axhline(h, color="0.5", lw=0.8, ls="--" if h else "-")
        ax.set_xlabel("Fitted values")
        ax.set_ylabel("Quantile residuals")
        _save(fig, Path(path))


def index_plots(path, panels: dict, ylabel: str, thresholds: dict | None = None):
    """One index plot per block (``panels`` maps block name -> values)."""
    with plt.rc_context(_RC):
        fig, axes = plt.subplots(1, len(panels), figsize=(3.2 * len(panels), 3.2), squeeze=False)
        for ax, (name, values) in zip(axes[0], panels.items()):
            idx = np.arange(1, len(values) + 1)
            ax.vlines(idx, 0, values, color="k", lw=0.8)
            if thresholds is not None:
                ax.axhline(thresholds[name], color="0.5", ls="--", lw=0.8)
                for i in np.flatnonzero(values > thresholds[name]):
                    ax.annotate(str(i + 1), (i + 1, values[i]), fontsize=7)
            ax.set_title(name)
            ax.set_xlabel("index")
            ax.set_ylabel(ylabel)
        fig.tight_layout()
        _save(fig, Path(path))
