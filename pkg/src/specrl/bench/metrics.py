"""Evaluation records, CSV emission and smoothed summaries.

CSV columns, in order: ``frame, return_mean, return_std, loss_<name>...,
seed``. Floats are written with ``repr`` so files round-trip exactly.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

LOSS_NAMES = {
    "td3": ("critic", "actor"),
    "scl": ("scl", "reward", "critic", "actor"),
    "lvrep": ("elbo", "reward", "critic", "actor"),
    "diffsr": ("csm", "reward", "critic", "actor"),
    "ctrlsr": ("nce", "reward", "critic", "actor"),
}


@dataclass
class MetricsRow:
    frame: int
    return_mean: float
    return_std: float
    losses: dict = field(default_factory=dict)
    wallclock_s: float = 0.0
    seed: int = 0


def csv_columns(loss_names) -> list:
    return ["frame", "return_mean", "return_std"] + [f"loss_{n}" for n in loss_names] + ["seed"]


def _fmt(v) -> str:
    if v is None or (isinstance(v, float) and np.isnan(v)):
        return "nan"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def metrics_csv(rows, loss_names) -> str:
    frames = [r.frame for r in rows]
    if any(b <= a for a, b in zip(frames, frames[1:])):
        raise ValueError("metric rows must have strictly increasing frames")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(csv_columns(loss_names))
    for r in rows:
        w.writerow([r.frame, _fmt(r.return_mean), _fmt(r.return_std)]
                   + [_fmt(r.losses.get(n)) for n in loss_names] + [r.seed])
    return buf.getvalue()


def read_metrics_csv(path) -> list:
    with open(path) as f:
        return list(csv.DictReader(f))


def smooth(values, window: int) -> np.ndarray:
    """Trailing moving average; early points average what is available."""
    if window < 1:
        raise ValueError("smoothing window must be >= 1")
    v = np.asarray(values, dtype=np.float64)
    c = np.concatenate([[0.0], np.cumsum(v)])
    idx = np.arange(1, v.size + 1)
    lo = np.maximum(idx - window, 0)
    return (c[idx] - c[lo]) / (idx - lo)


def summary(rows, smoothing_window: int, extra: dict = None) -> dict:
    if not rows:
        out = {"smoothing_window": smoothing_window, "frames": [], "smoothed_return": [],
               "final_smoothed_return": None, "best_return": None}
    else:
        sm = smooth([r.return_mean for r in rows], smoothing_window)
        out = {"smoothing_window": smoothing_window,
               "frames": [r.frame for r in rows],
               "smoothed_return": [float(x) for x in sm],
               "final_smoothed_return": float(sm[-1]),
               "best_return": float(max(r.return_mean for r in rows))}
    if extra:
        out.update(extra)
    return out


def emit_metrics(rows, smoothing_window: int, csv_path, json_path, loss_names, extra: dict = None):
    """Write the raw CSV and the summary JSON; returns the summary dict."""
    with open(csv_path, "w") as f:
        f.write(metrics_csv(rows, loss_names))
    s = summary(rows, smoothing_window, extra)
    with open(json_path, "w") as f:
        json.dump(s, f, indent=2, sort_keys=True)
        f.write("\n")
    return s
