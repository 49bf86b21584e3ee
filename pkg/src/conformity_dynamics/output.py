"""File formats written by experiment runs."""

from __future__ import annotations

import csv
import json
import math

import numpy as np

__all__ = ["trajectory_columns", "write_trajectory_csv", "read_trajectory_csv", "write_json"]


def trajectory_columns(n):
    """Fixed CSV header: time, shares, biased and actual costs, integrator, storages, events."""
    cols = ["t"]
    for prefix in ("pi", "tau", "T", "mu"):
        cols += [f"{prefix}_{k + 1}" for k in range(n)]
    return cols + ["S", "H_or_U", "V", "event_flags"]


def _fmt(x):
    return format(float(x), ".17g")


def write_trajectory_csv(traj, path):
    """Write one row per recorded sample with 17 significant digits."""
    n = traj.pi.shape[1]
    flags = traj.event_flags
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(trajectory_columns(n))
        for i in range(len(traj)):
            row = [_fmt(traj.t[i])]
            for arr in (traj.pi, traj.tau, traj.T, traj.mu):
                row += [_fmt(v) for v in arr[i]]
            row += [_fmt(traj.S[i]), _fmt(traj.storage[i]), _fmt(traj.V[i]), flags[i]]
            w.writerow(row)


def read_trajectory_csv(path):
    """Read a trajectory CSV back into ``(header, numeric array, flags)``."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    data = np.array([[float(v) for v in r[:-1]] for r in body]) if body else np.zeros((0, len(header) - 1))
    return header, data, [r[-1] for r in body]


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def write_json(obj, path):
    """Write JSON with NaN/inf mapped to ``null``."""
    with open(path, "w") as fh:
        json.dump(_clean(obj), fh, indent=2)
        fh.write("\n")
