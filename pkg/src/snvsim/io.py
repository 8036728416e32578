"""File emission: RFC-4180 CSV with shortest round-trip floats, JSON
manifests and gnuplot scripts. Every writer is deterministic, so reruns with
the same master seed reproduce artifacts byte for byte."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np


def fmt(x):
    """Shortest decimal string that round-trips the float exactly."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def write_csv(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\r\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) if isinstance(v, (int, float, np.integer,
                                                      np.floating)) else v
                             for v in row])
    return path


def write_noise_csv(realization, path):
    rows = ((k, k * realization.delta_r, v)
            for k, v in enumerate(realization.values))
    return write_csv(path, ["k", "t_k", "X_k"], rows)


def write_density_csv(grid, path):
    rows = zip(grid.nodes, grid.weights, grid.density)
    return write_csv(path, ["a_j", "w_j", "f"], rows)


def write_snapshots_csv(result, path):
    header = ["x_j"] + [f"rho_t{fmt(s.time)}" for s in result.snapshots]
    xc = result.grid.cell_centers()
    cols = [xc] + [s.values for s in result.snapshots]
    rows = zip(*cols)
    return write_csv(path, header, rows)


def write_ensemble_csv(stats, path, esnv_values=None):
    header = ["x_j", "mean"] + [f"q{int(round(level * 100)):02d}"
                                for level in sorted(stats.quantiles)]
    cols = [stats.mean.grid.cell_centers(), stats.mean.values]
    cols += [stats.quantiles[level].values
             for level in sorted(stats.quantiles)]
    if esnv_values is not None:
        header.append("esnv")
        cols.append(esnv_values)
    return write_csv(path, header, zip(*cols))


def write_paths_csv(paths, path, labels=None):
    """Long-form path bundle: (realization, t, X)."""
    labels = labels if labels is not None else range(len(paths))

    def rows():
        for label, p in zip(labels, paths):
            for t, x in zip(p.times, p.positions):
                yield (label, t, x)

    return write_csv(path, ["realization", "t", "X"], rows())


def write_bias_csv(result, path):
    def rows():
        for i, m in enumerate(result.m_values):
            for j, dt in enumerate(result.dt_values):
                for p, x0 in enumerate(result.start_points):
                    yield (m, dt, 0.0, x0, result.bias[i, j, p])

    return write_csv(path, ["M", "dt", "t0", "x0", "bias"], rows())


def write_manifest(path, payload):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(_jsonable(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, Path):
        return str(obj)
    return obj


def write_gnuplot(path, title, csv_name, plot_lines):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [
        "set datafile separator ','",
        f"set title '{title}'",
        "set key outside",
        f"# data: {csv_name}",
        "plot \\",
    ]
    lines.append(", \\\n".join(plot_lines))
    path.write_text("\n".join(lines) + "\n")
    return path


def error_json(code, message, **extra):
    payload = {"error": code, "message": message}
    payload.update(extra)
    return json.dumps(payload, sort_keys=True)
