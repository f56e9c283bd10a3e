"""Static figures for CLI reports.

matplotlib is imported on first use with the Agg backend, so the numerical
modules never depend on it.
"""

from __future__ import annotations

import math


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _save(fig, path):
    # fixed metadata keeps repeated renders byte-stable
    fig.savefig(path, dpi=120, metadata={"Software": None})
    _pyplot().close(fig)
    return path


def plot_fields(path, fields, title=""):
    """Line plot of 1D fields, or one filled contour panel per 2D field.

    ``fields`` maps a legend label to a Field; all share one grid.
    """
    plt = _pyplot()
    items = list(fields.items())
    grid = items[0][1].grid
    if grid.dim == 1:
        fig, ax = plt.subplots(figsize=(6, 4))
        x = grid.coords()[0]
        for label, f in items:
            ax.plot(x, f.values, label=label, lw=1.5)
        ax.set_xlabel("x")
        ax.legend()
        ax.grid(alpha=0.3)
        if title:
            ax.set_title(title)
    else:
        fig, axes = plt.subplots(1, len(items), figsize=(4.2 * len(items), 3.6), squeeze=False)
        x, y = grid.coords()
        for ax, (label, f) in zip(axes[0], items):
            cs = ax.contourf(x, y, f.as_array(), levels=24)
            fig.colorbar(cs, ax=ax)
            ax.set_title(label)
            ax.set_aspect("equal")
        if title:
            fig.suptitle(title)
    fig.tight_layout()
    return _save(fig, path)


def plot_table(path, table, x, ys, logx=False, logy=False, title=""):
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4))
    xs = table.column(x)
    for name in ys:
        pts = [(a, b) for a, b in zip(xs, table.column(name)) if not (logy and b <= 0) and not (logx and a <= 0)]
        if pts:
            ax.plot(*zip(*pts), "o-", label=name, ms=4)
    if logx:
        ax.set_xscale("log")
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel(x)
    ax.legend()
    ax.grid(alpha=0.3, which="both")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    return _save(fig, path)


def plot_history(path, histories, title=""):
    """Objective and constraint violation against iteration, one line per start."""
    plt = _pyplot()
    fig, (a1, a2) = plt.subplots(1, 2, figsize=(10, 4))
    for k, hist in enumerate(histories):
        it = [r["iteration"] for r in hist]
        a1.plot(it, [r["objective"] for r in hist], lw=1, label=f"start {k}")
        viol = [abs(r["violation"]) for r in hist]
        a2.semilogy(it, [v if v > 0 else math.nan for v in viol], lw=1)
    a1.set_xlabel("iteration")
    a1.set_ylabel("objective")
    a1.legend(fontsize=7)
    a2.set_xlabel("iteration")
    a2.set_ylabel("|lambda1(q) - lambda|")
    for a in (a1, a2):
        a.grid(alpha=0.3)
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    return _save(fig, path)
