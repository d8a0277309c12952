"""Learning-curve figures and a per-group summary table from finished runs.

matplotlib is imported lazily so the rest of the package has no graphics
dependency.
"""
from __future__ import annotations

import json
import os
from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from .config import load_config
from .metrics import read_metrics_csv, smooth


@dataclass
class RunCurves:
    path: str
    label: str
    seed: int
    frames: np.ndarray
    returns: np.ndarray
    losses: dict


def _label(cfg) -> str:
    parts = [cfg.kind]
    if cfg.env != "pendulum":
        parts.append(cfg.env)
    if cfg.window > 1 or cfg.window_adapter:
        parts.append(f"L={cfg.window}")
    return " ".join(parts)


def _find_run_dirs(root):
    if os.path.isfile(os.path.join(root, "metrics.csv")):
        return [root]
    found = []
    for dirpath, _, files in os.walk(root):
        if "metrics.csv" in files:
            found.append(dirpath)
    return sorted(found)


def load_run(path) -> RunCurves:
    rows = read_metrics_csv(os.path.join(path, "metrics.csv"))
    cfg = load_config(os.path.join(path, "config.txt"))
    frames = np.array([int(r["frame"]) for r in rows], dtype=np.int64)
    returns = np.array([float(r["return_mean"]) for r in rows])
    losses = {}
    for key in (rows[0].keys() if rows else ()):
        if key.startswith("loss_"):
            losses[key[5:]] = np.array([float(r[key]) for r in rows])
    return RunCurves(path, _label(cfg), cfg.seed, frames, returns, losses)


def collect_runs(roots) -> list:
    runs = []
    for root in roots:
        for d in _find_run_dirs(root):
            runs.append(load_run(d))
    return runs


def frames_to_threshold(run: RunCurves, threshold: float):
    hit = np.nonzero(run.returns >= threshold)[0]
    return int(run.frames[hit[0]]) if hit.size else None


def group_summary(runs, smoothing_window: int = 5, threshold: float = None) -> dict:
    groups = defaultdict(list)
    for r in runs:
        groups[r.label].append(r)
    out = {}
    for label, members in sorted(groups.items()):
        members = sorted(members, key=lambda r: r.seed)
        entry = {"seeds": [r.seed for r in members],
                 "final_smoothed": [float(smooth(r.returns, smoothing_window)[-1]) if r.returns.size else None
                                    for r in members],
                 "best": [float(r.returns.max()) if r.returns.size else None for r in members]}
        if threshold is not None:
            hits = [frames_to_threshold(r, threshold) for r in members]
            entry["frames_to_threshold"] = hits
            entry["n_reached"] = sum(h is not None for h in hits)
        out[label] = entry
    return out


def render_report(runs, out_dir, smoothing_window: int = 5, threshold: float = None) -> list:
    """Write ``returns.png``, ``losses.png`` and ``summary.json``; returns their paths."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    os.makedirs(out_dir, exist_ok=True)
    groups = defaultdict(list)
    for r in runs:
        groups[r.label].append(r)
    colors = plt.rcParams["axes.prop_cycle"].by_key()["color"]

    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    for i, (label, members) in enumerate(sorted(groups.items())):
        c = colors[i % len(colors)]
        for j, r in enumerate(members):
            if r.returns.size == 0:
                continue
            ax.plot(r.frames / 1000.0, smooth(r.returns, smoothing_window), color=c, alpha=0.8, lw=1.2,
                    label=label if j == 0 else None)
    if threshold is not None:
        ax.axhline(threshold, color="0.4", ls="--", lw=0.8)
    ax.set_xlabel("frames (thousands)")
    ax.set_ylabel(f"eval return (smoothed, window {smoothing_window})")
    ax.legend(frameon=False, fontsize=8)
    ax.spines[["top", "right"]].set_visible(False)
    fig.tight_layout()
    p_ret = os.path.join(out_dir, "returns.png")
    fig.savefig(p_ret, dpi=120)
    plt.close(fig)

    loss_names = sorted({k for r in runs for k in r.losses})
    n = max(len(loss_names), 1)
    fig, axes = plt.subplots(1, n, figsize=(3.2 * n, 3.0), squeeze=False)
    for ax, name in zip(axes[0], loss_names):
        for i, (label, members) in enumerate(sorted(groups.items())):
            c = colors[i % len(colors)]
            for j, r in enumerate(members):
                if name in r.losses and r.losses[name].size:
                    ax.plot(r.frames / 1000.0, r.losses[name], color=c, lw=1.0,
                            label=label if j == 0 else None)
        ax.set_title(name, fontsize=9)
        ax.set_xlabel("frames (thousands)")
        ax.spines[["top", "right"]].set_visible(False)
    if loss_names:
        axes[0][0].legend(frameon=False, fontsize=7)
    fig.tight_layout()
    p_loss = os.path.join(out_dir, "losses.png")
    fig.savefig(p_loss, dpi=120)
    plt.close(fig)

    p_sum = os.path.join(out_dir, "summary.json")
    with open(p_sum, "w") as f:
        json.dump(group_summary(runs, smoothing_window, threshold), f, indent=2, sort_keys=True)
        f.write("\n")
    return [p_ret, p_loss, p_sum]
