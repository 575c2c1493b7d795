"""Figure rendering for run reports.

Renders the plot-ready series the CLI emits as CSV into PNG files next to
them. All rendering is headless (Agg backend).
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

_FIGSIZE = (7.0, 4.3)
_JUMP_COLORS = {"jump_Dl": "tab:orange", "jump_Dm": "tab:red"}


def _new_axes(xlabel, ylabel, title):
    fig, ax = plt.subplots(figsize=_FIGSIZE)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    return fig, ax


def _finish(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def render_theta_norm(ts, norms, events, delta: float, path) -> None:
    """Output-norm history with the hysteresis bound and jump markers."""
    fig, ax = _new_axes("t [s]", "||theta||", "MRP output norm")
    ax.plot(ts, norms, lw=1.0, color="tab:blue", label="||theta||")
    ax.axhline(1.0 + delta, color="gray", ls="--", lw=0.8, label="1 + delta")
    seen = set()
    for t, n, e in zip(ts, norms, events):
        if e in _JUMP_COLORS:
            label = e if e not in seen else None
            seen.add(e)
            ax.plot([t], [n], marker="o", ms=4, color=_JUMP_COLORS[e],
                    ls="none", label=label)
    ax.legend(loc="best", fontsize=8)
    _finish(fig, path)


def render_distance(series_by_ic, threshold: float, path) -> None:
    """Distance-to-target convergence for a sweep of initial conditions."""
    fig, ax = _new_axes("t [s]", "distance to target set", "Convergence evidence")
    for idx, series in series_by_ic:
        ts = [p[0] for p in series]
        ds = [max(p[1], 1e-16) for p in series]
        ax.semilogy(ts, ds, lw=0.9, alpha=0.8, label=f"ic {idx}")
    ax.axhline(threshold, color="gray", ls="--", lw=0.8)
    if len(series_by_ic) <= 10:
        ax.legend(loc="best", fontsize=7)
    _finish(fig, path)


def render_equivalence(ts, devs, tol: float, path) -> None:
    """Aligned-trajectory deviation between the two closed loops."""
    fig, ax = _new_axes("t [s]", "max componentwise deviation", "Loop correspondence")
    ax.semilogy(ts, [max(d, 1e-18) for d in devs], lw=0.9, color="tab:green")
    ax.axhline(tol, color="gray", ls="--", lw=0.8, label="tolerance")
    ax.legend(loc="best", fontsize=8)
    _finish(fig, path)
