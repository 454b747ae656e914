"""Deterministic SVG rendering of distributions and time series.

Figures are drawn off-screen under a fixed style, a fixed
hash salt and no date metadata, so identical data give identical files.
"""

from __future__ import annotations

from contextlib import contextmanager
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

__all__ = ["STYLE", "style", "save_svg", "plot_distributions", "plot_series"]

STYLE = {
    "svg.hashsalt": "metawalk",
    "svg.fonttype": "none",
    "path.simplify": False,
    "figure.figsize": (7.0, 4.2),
    "figure.dpi": 100,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "legend.frameon": False,
    "font.size": 10,
    "lines.linewidth": 1.4,
}


@contextmanager
def style():
    with plt.rc_context(STYLE):
        yield


def save_svg(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)
    return path


def plot_distributions(curves, path, title: str = "", xlabel: str = "state", ylabel: str = "mass",
                       logy: bool = False, steps: bool = False) -> Path:
    """Plot several ``label -> (states, mass)`` curves on one axis and save as SVG.

    Values may also be :class:`metawalk.stationary.ProbVector` instances.
    """
    with style():
        fig, ax = plt.subplots()
        for label, val in curves.items():
            x, y = _xy(val)
            if logy:
                y = np.where(y > 0, y, np.nan)
            if steps:
                ax.step(x, y, where="mid", label=label)
            else:
                ax.plot(x, y, label=label)
        if logy:
            ax.set_yscale("log")
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        if len(curves) > 1:
            ax.legend()
        fig.tight_layout()
        return save_svg(fig, path)


def plot_series(x, ys: dict, path, title: str = "", xlabel: str = "t", ylabel: str = "",
                logx: bool = False, logy: bool = False) -> Path:
    """Plot ``label -> values`` against a shared ``x`` and save as SVG."""
    x = np.asarray(x, dtype=float)
    with style():
        fig, ax = plt.subplots()
        for label, y in ys.items():
            y = np.asarray(y, dtype=float)
            if logy:
                y = np.where(y > 0, y, np.nan)
            ax.plot(x, y, marker="o", markersize=3, label=label)
        if logx:
            ax.set_xscale("log")
        if logy:
            ax.set_yscale("log")
        ax.set_xlabel(xlabel)
        if ylabel:
            ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        if len(ys) > 1:
            ax.legend()
        fig.tight_layout()
        return save_svg(fig, path)


def _xy(val):
    if hasattr(val, "support") and hasattr(val, "mass"):
        return val.states.astype(float), np.asarray(val.mass, dtype=float)
    x, y = val
    return np.asarray(x, dtype=float), np.asarray(y, dtype=float)
