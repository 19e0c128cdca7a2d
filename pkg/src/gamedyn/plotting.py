"""Figure rendering for scenario runs.

Uses the Agg backend so runs work headless; figures are written next to the
delimited trajectory output and never gate a scenario's exit status.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = ["scenario_figure", "cycle_cube_figure"]


def scenario_figure(traj, recurrence=None, conserved=None, title="", path="figure.png"):
    """Two-panel overview: distance-to-start on a log scale (with return
    events when a recurrence report is given) and energy or strategy series."""
    fig, axes = plt.subplots(2, 1, figsize=(9, 6), sharex=True)

    ax = axes[0]
    xh = traj.xhat()
    d = np.linalg.norm(xh - xh[0], axis=1)
    positive = d > 0
    ax.plot(traj.t[positive], np.log10(d[positive]), lw=0.6, color="navy")
    if recurrence is not None:
        ax.axhline(np.log10(recurrence.epsilon), color="crimson", lw=0.8, ls="--",
                   label=f"threshold {recurrence.epsilon:g}")
        if recurrence.events:
            ts = [e[0] for e in recurrence.events]
            ds = [np.log10(max(e[1], 1e-300)) for e in recurrence.events]
            ax.plot(ts, ds, "v", color="crimson", ms=5, label=f"{len(recurrence.events)} returns")
        ax.legend(loc="upper right", fontsize=8)
    ax.set_ylabel("log10 distance to start")
    if title:
        ax.set_title(title, fontsize=11)

    ax = axes[1]
    if conserved is not None:
        ax.plot(traj.t, conserved.series, lw=0.8, color="darkorange",
                label=f"total storage (drift {conserved.max_drift:.2e})")
        ax.legend(loc="upper right", fontsize=8)
        ax.set_ylabel("storage sum")
    else:
        for i, x in enumerate(traj.x):
            ax.plot(traj.t, x[:, 0], lw=0.6, label=f"agent {i + 1} action 1")
        ax.legend(loc="upper right", fontsize=8)
        ax.set_ylabel("first-action probability")
    ax.set_xlabel("t")

    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def cycle_cube_figure(labeled_trajectories, path="cube.png"):
    """First-action probabilities of three two-action agents as a 3-D curve,
    one color per labeled trajectory; the common start is marked."""
    fig = plt.figure(figsize=(7, 6))
    ax = fig.add_subplot(projection="3d")
    colors = ["navy", "black", "crimson", "darkorange"]
    for c, (label, traj) in zip(colors, labeled_trajectories):
        xs = [traj.x[i][:, 0] for i in range(3)]
        ax.plot(*xs, lw=0.5, color=c, label=label)
    first = labeled_trajectories[0][1]
    ax.scatter(*[first.x[i][0, 0] for i in range(3)], color="black", s=30)
    ax.set_xlabel("$x_1$")
    ax.set_ylabel("$x_2$")
    ax.set_zlabel("$x_3$")
    ax.legend(loc="upper left", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
