"""Artifact writers: CSV tables and PGM heatmaps.

All grid exports share one scan order: the full rectangular cell-center
lattice, rows from the top (max y) down, columns left to right.  Cells
excluded from the admissible region (too close to a transmitter) are
written as empty CSV fields and as black pixels in PGM images.

Floats are written with ``repr`` so that reading a CSV back reproduces the
values bit-exactly.
"""

import csv
import json

import numpy as np


def _fmt(value):
    return "" if not np.isfinite(value) else repr(float(value))


def lattice_field(grid, values):
    """Scatter admissible-cell values into the full (ny, nx) lattice (NaN holes)."""
    field = np.full(grid.shape[0] * grid.shape[1], np.nan)
    field[grid.flat_index] = values
    return field.reshape(grid.shape)


def lattice_points(grid):
    """All lattice cell centers in scan order, shape (ny*nx, 2)."""
    gx, gy = np.meshgrid(grid.xs, grid.ys)
    return np.stack([gx.ravel(), gy.ravel()], axis=1)


def write_truth_csv(grid, path):
    """Ground-truth map export: x,y,power_dbw in row-major scan order."""
    field = lattice_field(grid, grid.truth).ravel()
    points = lattice_points(grid)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y", "power_dbw"])
        for (x, y), value in zip(points, field):
            writer.writerow([repr(float(x)), repr(float(y)), _fmt(value)])


def write_map_csv(grid, predictions, path):
    """Map comparison export: x,y,true_dbw,pred_dbw in scan order."""
    truth = lattice_field(grid, grid.truth).ravel()
    pred = lattice_field(grid, predictions).ravel()
    points = lattice_points(grid)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y", "true_dbw", "pred_dbw"])
        for (x, y), t, p in zip(points, truth, pred):
            writer.writerow([repr(float(x)), repr(float(y)), _fmt(t), _fmt(p)])


def write_feature_csv(points, feature_matrix, path):
    """Feature dump: x,y,f1,...,fM with missing entries as empty fields."""
    features = np.asarray(feature_matrix, dtype=float)
    points = np.asarray(points, dtype=float)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y"] + [f"f{m + 1}" for m in range(features.shape[0])])
        for i, (x, y) in enumerate(points):
            writer.writerow(
                [repr(float(x)), repr(float(y))] + [_fmt(v) for v in features[:, i]]
            )


def write_pgm(field, path):
    """8-bit grayscale PGM (binary P5), linear scaling between finite min/max.

    NaN cells map to 0.  ``field`` is a 2-D array already in image scan
    order (row 0 at the top).
    """
    field = np.asarray(field, dtype=float)
    finite = np.isfinite(field)
    lo = field[finite].min() if finite.any() else 0.0
    hi = field[finite].max() if finite.any() else 1.0
    span = hi - lo if hi > lo else 1.0
    scaled = np.zeros(field.shape, dtype=np.uint8)
    scaled[finite] = np.clip(
        np.round(1 + 254 * (field[finite] - lo) / span), 1, 255
    ).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{field.shape[1]} {field.shape[0]}\n255\n".encode("ascii"))
        fh.write(scaled.tobytes())


def write_results_csv(rows, path):
    """Per-run results: estimator,N,run,nmse."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["estimator", "N", "run", "nmse"])
        for estimator, n, run, value in rows:
            writer.writerow([estimator, n, run, repr(float(value))])


def write_summary_json(summary, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, allow_nan=False)
        fh.write("\n")
