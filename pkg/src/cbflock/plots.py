"""Static SVG rendering of recorded traces: distance curves and XY paths."""
from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .predict import beta_plus_timed
from .simulate import SimTrace


def plot_distances(trace: SimTrace, out_path, meta: dict | None = None) -> Path:
    """Pairwise distance curves vs time, with the safety margin and, when the
    trace came from a canonical scenario, the critical-distance overlays."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for col, (i, j) in enumerate(trace.pairs):
        ax.plot(trace.times, trace.distances[:, col], label=f"robots {i}-{j}")
    d_s = None
    if meta:
        d_s = meta.get("safety", {}).get("d_s")
        canonical = meta.get("canonical")
        if canonical and canonical.get("kind") == "two_robot_collinear":
            from .core import SafetyParams

            safety = SafetyParams(**meta["safety"])
            ts = trace.times
            for label, d_g, k_p in (
                ("robot 1", canonical["d_g1"], canonical["k_p1"]),
                ("robot 2", canonical["d_g2"], canonical["k_p2"]),
            ):
                beta = [beta_plus_timed(d_g, k_p, t, safety) for t in ts]
                ax.plot(ts, beta, "--", linewidth=1, label=f"critical ({label})")
        elif canonical and canonical.get("kind") == "three_robot_antipodal":
            from .core import SafetyParams

            safety = SafetyParams(**meta["safety"])
            s = math.sqrt(3.0) * canonical["d_g"] * canonical["k_p"] / safety.gamma
            beta = [
                s * math.exp(-canonical["k_p"] * t)
                + math.hypot(s * math.exp(-canonical["k_p"] * t), safety.d_s)
                for t in trace.times
            ]
            ax.plot(trace.times, beta, "--", linewidth=1, label="critical")
    if d_s is not None:
        ax.axhline(d_s, color="k", linewidth=0.8, label="safety margin")
    for ev in trace.events:
        if ev.kind in ("phase2_enter", "phase3_enter", "done"):
            ax.axvline(ev.time, color="gray", linewidth=0.8, linestyle=":")
            ax.annotate(
                ev.kind.replace("_enter", ""),
                (ev.time, ax.get_ylim()[1]),
                fontsize=7,
                rotation=90,
                va="top",
            )
    ax.set_xlabel("time (s)")
    ax.set_ylabel("distance (m)")
    ax.legend(loc="best", fontsize=8)
    ax.set_title("pairwise distances")
    fig.tight_layout()
    out_path = Path(out_path)
    fig.savefig(out_path, format="svg")
    plt.close(fig)
    return out_path


def plot_paths(trace: SimTrace, out_path, meta: dict | None = None) -> Path:
    """XY paths with start markers and, when available, goal markers."""
    fig, ax = plt.subplots(figsize=(5.5, 5.5))
    goals = {}
    if meta:
        for r in meta.get("robots", []):
            goals[r["id"]] = r["goal"]
    for i, rid in enumerate(trace.robot_ids):
        xs = trace.positions[:, i, 0]
        ys = trace.positions[:, i, 1]
        (line,) = ax.plot(xs, ys, label=f"robot {rid}")
        ax.plot(xs[0], ys[0], "o", color=line.get_color())
        ax.plot(xs[-1], ys[-1], "s", color=line.get_color())
        if rid in goals:
            ax.plot(goals[rid][0], goals[rid][1], "*", markersize=12, color=line.get_color())
    ax.set_xlabel("x (m)")
    ax.set_ylabel("y (m)")
    ax.set_aspect("equal", adjustable="datalim")
    ax.legend(loc="best", fontsize=8)
    ax.set_title("robot paths (o start, s end, * goal)")
    fig.tight_layout()
    out_path = Path(out_path)
    fig.savefig(out_path, format="svg")
    plt.close(fig)
    return out_path
