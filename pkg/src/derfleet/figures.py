"""Figure rendering for the report paths.

Plots show the maximum available power under each policy as a step
function over time, with the requested reference overlaid and each
policy's failure instant marked. Files are written with a fixed style so
repeated runs are byte-identical.
"""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .reference import ReferenceSignal, segments
from .reports import ComparisonResult

__all__ = ["plot_available_power"]

_COLORS = {"op": "tab:blue", "lpf": "tab:orange", "pop": "tab:green"}


def _step_xy(steps: list[tuple[float, float]], end: float) -> tuple[list[float], list[float]]:
    xs, ys = [], []
    for t, kw in steps:
        xs.append(t)
        ys.append(kw)
    xs.append(end)
    ys.append(ys[-1])
    return xs, ys


def plot_available_power(result: ComparisonResult, signal: ReferenceSignal, path: Path) -> None:
    """Available-power trajectories vs the reference, failure times marked."""
    fig, ax = plt.subplots(figsize=(8.0, 4.5))
    ref_x, ref_y = [], []
    for start, end, value in segments(signal):
        ref_x += [start, end]
        ref_y += [value, value]
    ax.plot(ref_x, ref_y, color="0.4", linewidth=1.0, label="reference")

    for run in result.runs:
        name = run.policy.value
        color = _COLORS.get(name, "tab:red")
        end = run.trace.time_to_failure
        xs, ys = _step_xy(run.available_power, max(end, run.available_power[-1][0]))
        ax.step(xs, ys, where="post", color=color, linewidth=1.4, label=name)
        if not run.trace.survived:
            ax.axvline(end, color=color, linestyle=":", linewidth=1.0)
            ax.plot([end], [0.0], marker="x", color=color, markersize=7)

    ax.set_xlabel("time (h)")
    ax.set_ylabel("power (kW)")
    ax.set_xlim(0.0, signal.horizon)
    ax.set_ylim(bottom=0.0)
    ax.legend(loc="upper right", fontsize=9)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
