"""Long-format curve parsing, time normalization, landmark registration.

Curves arrive as long CSV rows (subject, side, dimension, stride, t, value);
covariates as one row per subject (or per subject and side). The assembly
pipeline normalizes each stride to [0, domain_end], registers all dimensions
of a stride to a single landmark with one shared piecewise-linear warp,
resamples onto a common grid, fits first-stage basis coefficients per
dimension and averages them over strides.
"""

import csv
from dataclasses import dataclass, replace

import numpy as np

from .basis import (
    BasisSystem,
    CoefficientSet,
    DimensionLayout,
    average_by_group,
    fit_coefficients,
    gram_matrix,
    make_bspline,
)
from .errors import DataError, LinkageError, SchemaError

__all__ = [
    "CovariateTable",
    "FunctionalDataset",
    "RawCurve",
    "landmark_register",
    "parse_long_csv",
    "prepare_dataset",
    "time_normalize",
]

SIDES = ("left", "right")

CURVE_COLUMNS = ("subject", "side", "dimension", "stride", "t", "value")


@dataclass
class RawCurve:
    """One dimension of one stride: strictly increasing times plus values."""

    subject_id: str
    side: str
    dimension: str
    stride: int
    times: np.ndarray
    values: np.ndarray


@dataclass
class CovariateTable:
    """Covariate rows keyed by subject id, or by (subject id, side).

    `columns` lists covariate names in file order; `rows` maps the key to a
    name -> value dict. Values are floats when they parse as numbers and raw
    strings otherwise (categorical codes).
    """

    columns: list
    rows: dict
    side_specific: bool = False

    def lookup(self, subject_id, side):
        key = (subject_id, side) if self.side_specific else subject_id
        if key not in self.rows:
            raise LinkageError(f"no covariate row for subject {subject_id!r}")
        return self.rows[key]


@dataclass
class FunctionalDataset:
    """Model-ready data: one coefficient row per (subject, side) + covariates."""

    coeffs: CoefficientSet
    covariates: CovariateTable
    bases: dict  # dimension label -> BasisSystem
    grams: dict  # dimension label -> Gram matrix
    grid: np.ndarray

    @property
    def subjects(self):
        seen = []
        for key in self.coeffs.keys:
            if key[0] not in seen:
                seen.append(key[0])
        return seen


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------


def parse_long_csv(curves_path, covariates_path, schema=None):
    """Read the curve and covariate CSVs into RawCurves and a CovariateTable.

    `schema` optionally renames curve columns, mapping logical names
    ("subject", "side", "dimension", "stride", "t", "value") to the actual
    header names. Curves are grouped by (subject, side, dimension, stride)
    and ordered deterministically; within a curve, t must strictly increase.
    """
    schema = {**{c: c for c in CURVE_COLUMNS}, **(schema or {})}

    with open(curves_path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise SchemaError(f"{curves_path}: empty file, expected a header row")
        for logical in CURVE_COLUMNS:
            if logical == "stride" and schema[logical] not in reader.fieldnames:
                continue  # stride column optional; defaults to 0
            if schema[logical] not in reader.fieldnames:
                raise SchemaError(
                    f"{curves_path}: missing column {schema[logical]!r}"
                )
        has_stride = schema["stride"] in reader.fieldnames
        groups = {}
        for row_index, row in enumerate(reader, start=2):  # 1-based incl. header
            key = (
                row[schema["subject"]],
                row[schema["side"]],
                row[schema["dimension"]],
                int(row[schema["stride"]]) if has_stride else 0,
            )
            try:
                t = float(row[schema["t"]])
                v = float(row[schema["value"]])
            except ValueError as exc:
                raise DataError(f"{curves_path}: row {row_index}: {exc}") from None
            groups.setdefault(key, []).append((row_index, t, v))

    if not groups:
        raise SchemaError(f"{curves_path}: no data rows")

    curves = []
    for key in sorted(groups, key=lambda k: (k[0], k[1], k[2], k[3])):
        rows = groups[key]
        times = np.array([r[1] for r in rows])
        if np.any(np.diff(times) <= 0):
            bad = int(np.argmax(np.diff(times) <= 0)) + 1
            raise DataError(
                f"{curves_path}: non-increasing t at row {rows[bad][0]} "
                f"(curve {key})"
            )
        curves.append(
            RawCurve(
                subject_id=key[0],
                side=key[1],
                dimension=key[2],
                stride=key[3],
                times=times,
                values=np.array([r[2] for r in rows]),
            )
        )

    covariates = _parse_covariates(covariates_path)
    for curve in curves:
        covariates.lookup(curve.subject_id, curve.side)
    return curves, covariates


def _parse_covariates(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise SchemaError(f"{path}: empty file, expected a header row")
        if "subject" not in reader.fieldnames:
            raise SchemaError(f"{path}: missing column 'subject'")
        side_specific = "side" in reader.fieldnames
        columns = [c for c in reader.fieldnames if c not in ("subject", "side")]
        rows = {}
        for row_index, row in enumerate(reader, start=2):
            key = (row["subject"], row["side"]) if side_specific else row["subject"]
            values = {}
            for col in columns:
                raw = row[col]
                if raw is None or raw == "":
                    raise DataError(
                        f"{path}: row {row_index}: missing value for {col!r}"
                    )
                try:
                    values[col] = float(raw)
                except ValueError:
                    values[col] = raw
            rows[key] = values
    return CovariateTable(columns=columns, rows=rows, side_specific=side_specific)


# ---------------------------------------------------------------------------
# Normalization and registration
# ---------------------------------------------------------------------------


def time_normalize(curve, domain_end=100.0):
    """Affinely map the curve's times onto [0, domain_end]; values unchanged."""
    t = curve.times
    if t.size < 2 or t[-1] == t[0]:
        raise DataError(
            f"curve {curve.subject_id}/{curve.side}/{curve.dimension}: "
            "degenerate time domain"
        )
    scaled = (t - t[0]) / (t[-1] - t[0]) * domain_end
    return replace(curve, times=scaled)


def landmark_register(curves, landmark_dim, target, domain_end=100.0):
    """Warp all dimensions of one (subject, side, stride) to a shared landmark.

    The landmark time tau is the grid argmax of the landmark dimension (ties
    broken by earliest time). Every dimension is resampled through the same
    piecewise-linear warp h with h(0)=0, h(tau)=target, h(domain_end)=
    domain_end, keeping the cross-dimension sample pairing intact.
    """
    by_dim = {c.dimension: c for c in curves}
    if landmark_dim not in by_dim:
        raise DataError(f"landmark dimension {landmark_dim!r} not present")
    if not 0.0 < target < domain_end:
        raise DataError(f"registration target {target} outside (0, {domain_end})")
    lm = by_dim[landmark_dim]
    tau = float(lm.times[int(np.argmax(lm.values))])
    if tau <= 0.0 or tau >= domain_end:
        raise DataError(
            f"landmark at domain boundary (tau={tau}); warp would be degenerate"
        )
    knots_t = np.array([0.0, target, domain_end])
    knots_s = np.array([0.0, tau, domain_end])
    out = []
    for curve in curves:
        source = np.interp(curve.times, knots_t, knots_s)  # h^{-1} on the grid
        out.append(replace(curve, values=np.interp(source, curve.times, curve.values)))
    return out


def landmark_time(curves, landmark_dim):
    """Grid-argmax landmark time of the landmark dimension (ties: earliest)."""
    for c in curves:
        if c.dimension == landmark_dim:
            return float(c.times[int(np.argmax(c.values))])
    raise DataError(f"landmark dimension {landmark_dim!r} not present")


def resample(curve, grid):
    """Linear interpolation of the curve onto `grid`."""
    return np.interp(grid, curve.times, curve.values)


# ---------------------------------------------------------------------------
# Dataset assembly
# ---------------------------------------------------------------------------


def prepare_dataset(
    curves,
    covariates,
    basis_size=80,
    order=4,
    domain_end=100.0,
    n_grid=101,
    landmark_dim=None,
    target=None,
):
    """Run the preprocessing pipeline and return a FunctionalDataset.

    Steps: time-normalize each curve to [0, domain_end]; optionally register
    every stride to `landmark_dim` (target defaults to the mean landmark
    time over all strides); resample onto the common n_grid-point grid; fit
    per-dimension B-spline coefficients by least squares; average
    coefficients over strides within (subject, side).
    """
    dims = sorted({c.dimension for c in curves})
    grid = np.linspace(0.0, domain_end, n_grid)

    normalized = [time_normalize(c, domain_end) for c in curves]

    strides = {}
    for c in normalized:
        strides.setdefault((c.subject_id, c.side, c.stride), []).append(c)

    if landmark_dim is not None:
        if target is None:
            target = float(
                np.mean([landmark_time(cs, landmark_dim) for cs in strides.values()])
            )
        strides = {
            key: landmark_register(cs, landmark_dim, target, domain_end)
            for key, cs in strides.items()
        }

    basis = make_bspline(basis_size, order, (0.0, domain_end))
    layout = DimensionLayout(tuple(dims), (basis.size,) * len(dims))

    keys = []
    rows = []
    for key in sorted(strides):
        group = {c.dimension: c for c in strides[key]}
        missing = [d for d in dims if d not in group]
        if missing:
            raise DataError(f"stride {key} is missing dimensions {missing}")
        values = np.concatenate([resample(group[d], grid) for d in dims])
        row = np.concatenate(
            [
                fit_coefficients(values[p * n_grid : (p + 1) * n_grid], basis, grid)
                for p in range(len(dims))
            ]
        )
        keys.append(key)
        rows.append(row)

    coeffs = average_by_group(CoefficientSet(keys, np.stack(rows), layout))
    gram = gram_matrix(basis)
    return FunctionalDataset(
        coeffs=coeffs,
        covariates=covariates,
        bases={d: basis for d in dims},
        grams={d: gram for d in dims},
        grid=grid,
    )
