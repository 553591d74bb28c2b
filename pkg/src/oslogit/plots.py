"""Figure rendering for the report path.

Every function takes an already-aggregated table and writes one PNG.
Rendering is deterministic for identical inputs: fixed figure geometry,
fixed style, fixed metadata, no timestamps.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import pandas as pd

_SAVE_KW = dict(dpi=120, metadata={"Software": "oslogit"})
_COLORS = {"weighted": "#888888", "replacement": "#1f77b4", "poisson": "#d62728",
           "full": "#2ca02c"}
_MARKERS = {"weighted": "s", "replacement": "o", "poisson": "^", "full": "D"}


def _style(ax, xlabel: str, ylabel: str, title: str) -> None:
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.grid(True, alpha=0.3)


def relative_efficiency_figure(frame: pd.DataFrame, path: str) -> str:
    """Relative efficiency (weighted MSE / estimator MSE) against n.

    Expects the wide result frame with columns estimator, h, n,
    rel_eff.  One panel per h value; the horizontal line at one marks
    parity with the weighted baseline.
    """
    hs = sorted(frame["h"].unique())
    fig, axes = plt.subplots(1, len(hs), figsize=(5.0 * len(hs), 3.6), squeeze=False)
    for ax, h in zip(axes[0], hs):
        part = frame[(frame["h"] == h) & (frame["estimator"] != "weighted")]
        for est in sorted(part["estimator"].unique()):
            sub = part[part["estimator"] == est].sort_values("n")
            ax.plot(sub["n"], sub["rel_eff"], label=est,
                    color=_COLORS.get(est), marker=_MARKERS.get(est))
        ax.axhline(1.0, color="black", linewidth=0.8, linestyle="--")
        _style(ax, "subsample size n", "relative efficiency", f"h = {h}")
        ax.legend()
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
    return str(path)


def calibration_figure(table: pd.DataFrame, path: str) -> str:
    """Empirical MSE next to the mean estimated variance trace.

    Expects the calibration table (estimator, h, n, empirical_mse,
    mean_tr_v).  Solid lines carry the empirical MSE, dashed lines the
    average of the variance estimates.
    """
    hs = sorted(table["h"].unique())
    fig, axes = plt.subplots(1, len(hs), figsize=(5.0 * len(hs), 3.6), squeeze=False)
    for ax, h in zip(axes[0], hs):
        part = table[table["h"] == h]
        for est in sorted(part["estimator"].unique()):
            sub = part[part["estimator"] == est].sort_values("n")
            color = _COLORS.get(est)
            ax.plot(sub["n"], sub["empirical_mse"], label=f"{est} MSE",
                    color=color, marker=_MARKERS.get(est))
            ax.plot(sub["n"], sub["mean_tr_v"], label=f"{est} est.",
                    color=color, linestyle="--", marker="x")
        ax.set_yscale("log")
        _style(ax, "subsample size n", "squared error", f"h = {h}")
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
    return str(path)


def timing_figure(frame: pd.DataFrame, path: str) -> str:
    """Wall-clock seconds per method against N, log-log."""
    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    for method in sorted(frame["method"].unique()):
        sub = frame[frame["method"] == method].sort_values("N")
        ax.plot(sub["N"], sub["seconds"], label=method,
                color=_COLORS.get(method), marker=_MARKERS.get(method))
    ax.set_xscale("log")
    ax.set_yscale("log")
    _style(ax, "rows N", "seconds", "pipeline wall-clock time")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
    return str(path)
