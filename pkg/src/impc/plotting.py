"""SVG figures for runs and feasible-domain studies.

Figures are built without a pyplot state machine so importing this
module never touches a GUI backend.  SVG output drops the date stamp
and pins the hash salt, which keeps files stable across rebuilds,
though glyph subsetting still varies across matplotlib versions.
"""

from __future__ import annotations

import matplotlib
from matplotlib.figure import Figure

matplotlib.rcParams["svg.hashsalt"] = "impc"

_SAVE_KW = dict(format="svg", metadata={"Date": None}, bbox_inches="tight")


def plot_trajectories(records, cfg, report, path) -> None:
    """State and input traces with constraint and limit-set bands."""
    n, m = cfg.n, cfg.m
    fig = Figure(figsize=(7.5, 2.2 * (n + m)))
    axes = fig.subplots(n + m, 1, sharex=True)
    if n + m == 1:
        axes = [axes]
    for i in range(n):
        ax = axes[i]
        for r in records:
            ax.plot(range(r.states.shape[0]), r.states[:, i],
                    lw=0.9, alpha=0.8)
        ax.axhline(cfg.state_box.lower[i], color="k", ls="--", lw=0.8)
        ax.axhline(cfg.state_box.upper[i], color="k", ls="--", lw=0.8)
        rad = report.x_infinity.radius[i]
        ax.axhspan(-rad, rad, color="tab:green", alpha=0.15, lw=0)
        ax.set_ylabel(f"x_{i+1}")
    for j in range(m):
        ax = axes[n + j]
        for r in records:
            ax.step(range(r.steps), r.inputs[:, j], where="post",
                    lw=0.9, alpha=0.8)
        ax.axhline(cfg.input_box.lower[j], color="k", ls="--", lw=0.8)
        ax.axhline(cfg.input_box.upper[j], color="k", ls="--", lw=0.8)
        ax.set_ylabel(f"u_{j+1}")
    axes[-1].set_xlabel("step")
    fig.savefig(path, **_SAVE_KW)


def _hull_loop(points):
    from scipy.spatial import ConvexHull, QhullError
    if points.shape[0] < 3:
        return None
    try:
        hull = ConvexHull(points)
    except QhullError:
        return None
    idx = list(hull.vertices) + [hull.vertices[0]]
    return points[idx]


def plot_feasible_domain(study, cfg, path) -> None:
    """Scatter of the probed grid plus the hull of one dataset's domain."""
    if study.points.shape[1] != 2:
        raise ValueError("feasible-domain plots need a planar state space")
    fig = Figure(figsize=(6.5, 4.2))
    ax = fig.subplots()
    mask = next((r.mask for r in study.results if r.mask is not None), None)
    pts = study.points
    if mask is None:
        ax.plot(pts[:, 0], pts[:, 1], ".", color="0.7", ms=2)
    else:
        ax.plot(pts[~mask, 0], pts[~mask, 1], ".", color="0.8", ms=2,
                label="infeasible")
        ax.plot(pts[mask, 0], pts[mask, 1], ".", color="tab:blue", ms=3,
                label="feasible")
        loop = _hull_loop(pts[mask])
        if loop is not None:
            ax.plot(loop[:, 0], loop[:, 1], "-", color="tab:blue", lw=1.2)
        ax.legend(loc="upper right", fontsize=8)
    lo, hi = cfg.state_box.lower, cfg.state_box.upper
    ax.plot([lo[0], hi[0], hi[0], lo[0], lo[0]],
            [lo[1], lo[1], hi[1], hi[1], lo[1]], "k--", lw=0.8)
    ax.set_xlabel("x_1")
    ax.set_ylabel("x_2")
    ax.set_title(f"mean hull area {study.mean_area:.2f} over "
                 f"{len(study.results)} datasets")
    fig.savefig(path, **_SAVE_KW)
