"""Plot-ready CSV series from a run directory.

Only data is emitted; rendering is left to whatever tool the reader prefers.
"""
from __future__ import annotations

import csv
import shutil
from pathlib import Path

import numpy as np

from .metrics import read_metrics

SMOOTH_WINDOW = 10


def moving_average(values, window: int = SMOOTH_WINDOW) -> np.ndarray:
    """Trailing mean over up to ``window`` points; early points average what exists."""
    x = np.asarray(values, dtype=np.float64)
    if x.size == 0:
        return x
    csum = np.concatenate([[0.0], np.cumsum(x)])
    hi = np.arange(1, x.size + 1)
    lo = np.maximum(hi - window, 0)
    return (csum[hi] - csum[lo]) / (hi - lo)


def _fmt(v):
    return "" if v is None else repr(v)


def _write(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def export_plots(run_dir, out_dir=None) -> list:
    """Write the CSV series for ``run_dir`` into ``out_dir`` (default ``run_dir/plots``)."""
    run = Path(run_dir)
    out = Path(out_dir) if out_dir is not None else run / "plots"
    out.mkdir(parents=True, exist_ok=True)
    recs = read_metrics(run / "metrics.jsonl")
    steps = [r.step for r in recs]
    sr = [r.success_rate for r in recs]
    smooth = moving_average(sr).tolist()
    written = []

    def emit(name, header, rows):
        _write(out / name, header, rows)
        written.append(out / name)

    emit("success_rate.csv", ["step", "success_rate_raw", f"success_rate_ma{SMOOTH_WINDOW}", "mean_return"],
         [(s, a, float(b), r.mean_return) for s, a, b, r in zip(steps, sr, smooth, recs)])
    emit("kl.csv", ["step", "kl_mean", "kl_max"], [(r.step, r.kl_mean, r.kl_max) for r in recs])
    emit("alpha.csv", ["step", "alpha_high", "alpha_low"], [(r.step, r.alpha_high, r.alpha_low) for r in recs])
    emit("losses.csv", ["step", "critic_loss_high", "critic_loss_low", "actor_loss_high", "actor_loss_low"],
         [(r.step, r.critic_loss_high, r.critic_loss_low, r.actor_loss_high, r.actor_loss_low) for r in recs])
    src = run / "final_positions.csv"
    if src.exists():
        shutil.copyfile(src, out / "final_positions.csv")
        written.append(out / "final_positions.csv")
    return written
