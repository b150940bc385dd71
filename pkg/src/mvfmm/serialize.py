"""Tidy CSV writers for model outputs.

Floats are written with their shortest round-trip representation so that
identical runs produce byte-identical files and every value parses back
exactly.
"""

import csv
from pathlib import Path

import numpy as np

__all__ = [
    "write_bands_csv",
    "write_csv",
    "write_effects_csv",
    "write_scree_csv",
    "write_surface_csv",
    "read_csv",
]


def _fmt(value):
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def write_csv(path, header, rows):
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    return path


def read_csv(path):
    """Read back a CSV written by write_csv: (header, list of row dicts)."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
        return reader.fieldnames, rows


def write_effects_csv(path, model, grid, curves_by_effect):
    """Tidy fixed-effect functions: (effect, dimension, t, value)."""
    rows = []
    for a, curves in enumerate(curves_by_effect):
        for p, dim in enumerate(model.dim_names):
            for g, t in enumerate(grid):
                rows.append([model.effect_names[a], dim, t, curves[p, g]])
    return write_csv(path, ["effect", "dimension", "t", "value"], rows)


def write_bands_csv(path, bands):
    """Tidy bands: one row per (band, dimension, t) with the band arithmetic."""
    rows = []
    for band in bands:
        for p, dim in enumerate(band.dim_names):
            for g, t in enumerate(band.grid):
                rows.append(
                    [
                        band.effect_name,
                        dim,
                        t,
                        band.point[p, g],
                        band.se[p, g],
                        band.lower[p, g],
                        band.upper[p, g],
                        band.kind,
                        band.level,
                        band.multiplier,
                    ]
                )
    header = [
        "effect",
        "dimension",
        "t",
        "point",
        "se",
        "lower",
        "upper",
        "kind",
        "level",
        "multiplier",
    ]
    return write_csv(path, header, rows)


def write_surface_csv(path, surfaces):
    """Long covariance surfaces: (which, p, p_prime, t, t_prime, value)."""
    rows = []
    for which, surf in surfaces:
        for p, dim_p in enumerate(surf.dim_names):
            for q, dim_q in enumerate(surf.dim_names):
                for i, t in enumerate(surf.grid):
                    for j, t2 in enumerate(surf.grid):
                        rows.append([which, dim_p, dim_q, t, t2, surf.blocks[p, q, i, j]])
    return write_csv(
        path, ["which", "p", "p_prime", "t", "t_prime", "value"], rows
    )


def write_scree_csv(path, basis):
    rows = [
        [k + 1, basis.eigenvalues[k], basis.pve[k]]
        for k in range(basis.n_components)
    ]
    return write_csv(path, ["component", "eigenvalue", "cumulative_pve"], rows)
