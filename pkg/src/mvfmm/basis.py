"""Univariate basis systems and first-stage coefficient fitting.

Provides B-spline, Fourier and (shifted, normalized) Legendre systems on a
common interval, least-squares coefficient fitting, Gram matrices by
composite Simpson quadrature, stride averaging of coefficient rows, and the
"split" construction that turns one orthonormal univariate system on
[0, P*T] into P-variate orthonormal functions on [0, T].
"""

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import legvander
from scipy.interpolate import BSpline
from scipy.linalg import lstsq as _lstsq

from .errors import ConfigurationError, DataError, NumericalError

__all__ = [
    "BasisSystem",
    "CoefficientSet",
    "DimensionLayout",
    "SplitBasis",
    "average_by_group",
    "eval_basis",
    "fit_coefficients",
    "gram_matrix",
    "make_bspline",
    "make_fourier",
    "make_legendre",
    "split_multivariate_basis",
]


# ---------------------------------------------------------------------------
# Basis systems
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BasisSystem:
    """A univariate basis of `size` functions on [domain[0], domain[1]].

    kind is one of "bspline", "fourier", "legendre". For B-splines, `order`
    is the spline order (degree + 1) and `knots` holds the full knot vector
    with `order` repeats at each boundary.
    """

    kind: str
    size: int
    domain: tuple
    order: int = 0
    knots: tuple = ()

    def __post_init__(self):
        lo, hi = self.domain
        if not hi > lo:
            raise ConfigurationError(f"basis domain [{lo}, {hi}] is empty")
        if self.size < 1:
            raise ConfigurationError("basis size must be >= 1")


def make_bspline(size, order=4, domain=(0.0, 100.0)):
    """B-spline basis with uniform interior knots and clamped boundaries.

    `size` basis functions require `size >= order`; size == order gives the
    Bernstein basis (no interior knots).
    """
    if size < order:
        raise ConfigurationError(
            f"bspline size ({size}) must be at least the order ({order})"
        )
    lo, hi = float(domain[0]), float(domain[1])
    interior = np.linspace(lo, hi, size - order + 2)[1:-1]
    knots = np.r_[[lo] * order, interior, [hi] * order]
    return BasisSystem("bspline", int(size), (lo, hi), int(order), tuple(knots))


def make_fourier(size, domain=(0.0, 100.0)):
    """Orthonormal Fourier basis: constant, then sin/cos pairs of period T."""
    lo, hi = float(domain[0]), float(domain[1])
    return BasisSystem("fourier", int(size), (lo, hi))


def make_legendre(size, domain=(0.0, 100.0)):
    """Shifted Legendre polynomials, normalized to unit L2 norm on the domain."""
    lo, hi = float(domain[0]), float(domain[1])
    return BasisSystem("legendre", int(size), (lo, hi))


def eval_basis(basis, grid):
    """Evaluate all basis functions on `grid`.

    Returns a (len(grid), size) matrix; row i holds the basis values at
    grid[i]. Points outside the domain raise ValueError.
    """
    grid = np.asarray(grid, dtype=float)
    scalar = grid.ndim == 0
    grid = np.atleast_1d(grid)
    lo, hi = basis.domain
    span = hi - lo
    if grid.size and (grid.min() < lo - 1e-12 * span or grid.max() > hi + 1e-12 * span):
        raise ValueError(
            f"evaluation points outside basis domain [{lo}, {hi}]"
        )
    grid = np.clip(grid, lo, hi)

    if basis.kind == "bspline":
        out = BSpline.design_matrix(
            grid, np.asarray(basis.knots), basis.order - 1
        ).toarray()
    elif basis.kind == "fourier":
        out = np.empty((grid.size, basis.size))
        out[:, 0] = 1.0 / np.sqrt(span)
        amp = np.sqrt(2.0 / span)
        for j in range(1, basis.size):
            freq = (j + 1) // 2
            arg = 2.0 * np.pi * freq * (grid - lo) / span
            out[:, j] = amp * (np.sin(arg) if j % 2 == 1 else np.cos(arg))
    elif basis.kind == "legendre":
        x = 2.0 * (grid - lo) / span - 1.0
        out = legvander(x, basis.size - 1)
        out *= np.sqrt((2.0 * np.arange(basis.size) + 1.0) / span)
    else:
        raise ConfigurationError(f"unknown basis kind {basis.kind!r}")
    return out[0] if scalar else out


def gram_matrix(basis, n_quad=1001):
    """Gram matrix of pairwise L2 inner products via composite Simpson.

    `n_quad` must be odd and >= 3. The result is symmetrized as (G + G.T)/2.
    """
    if n_quad < 3 or n_quad % 2 == 0:
        raise ConfigurationError("n_quad must be an odd count >= 3")
    lo, hi = basis.domain
    grid = np.linspace(lo, hi, n_quad)
    w = simpson_weights(n_quad, hi - lo)
    E = eval_basis(basis, grid)
    G = (E * w[:, None]).T @ E
    return 0.5 * (G + G.T)


def simpson_weights(n, length):
    """Composite Simpson weights for n (odd) equispaced points over `length`."""
    h = length / (n - 1)
    w = np.ones(n)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w * (h / 3.0)


def fit_coefficients(values, basis, grid):
    """Least-squares basis coefficients for curve values sampled on `grid`.

    `values` may be a vector (one curve) or an (n_curves, len(grid)) matrix.
    Solves the full-rank least-squares problem with a pivoted-QR driver;
    rank deficiency raises NumericalError.
    """
    grid = np.asarray(grid, dtype=float)
    values = np.asarray(values, dtype=float)
    if grid.size < basis.size:
        raise NumericalError(
            f"need at least {basis.size} sample points to fit {basis.size} "
            f"basis coefficients, got {grid.size}"
        )
    E = eval_basis(basis, grid)
    coef, _, rank, _ = _lstsq(E, values.T, lapack_driver="gelsy")
    if rank < basis.size:
        raise NumericalError(
            f"design matrix rank {rank} below basis size {basis.size}"
        )
    return coef if values.ndim == 1 else coef.T


# ---------------------------------------------------------------------------
# Coefficient sets
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DimensionLayout:
    """Ordered (label, size) pairs locating each dimension's coefficient block."""

    names: tuple
    sizes: tuple

    def __post_init__(self):
        if len(self.names) != len(self.sizes):
            raise ConfigurationError("layout names and sizes differ in length")

    @property
    def total(self):
        return int(sum(self.sizes))

    @property
    def offsets(self):
        out = [0]
        for s in self.sizes:
            out.append(out[-1] + s)
        return tuple(out)

    def block(self, p):
        """Slice of the concatenated coefficient vector for dimension p."""
        off = self.offsets
        return slice(off[p], off[p + 1])

    def index(self, name):
        return self.names.index(name)


@dataclass
class CoefficientSet:
    """Concatenated per-dimension coefficient rows, one row per key.

    Keys are (subject, side) or (subject, side, stride) tuples; `coeffs` is
    an (n_rows, layout.total) matrix with dimension blocks in layout order.
    """

    keys: list
    coeffs: np.ndarray
    layout: DimensionLayout

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.ndim != 2 or self.coeffs.shape[0] != len(self.keys):
            raise ValueError("coefficient matrix shape does not match keys")
        if self.coeffs.shape[1] != self.layout.total:
            raise ValueError("coefficient matrix width does not match layout")

    @property
    def n_rows(self):
        return self.coeffs.shape[0]


def average_by_group(coeffs):
    """Average stride-level coefficient rows down to one row per (subject, side).

    Rows keyed (subject, side, stride) are averaged arithmetically over
    strides; output rows are keyed (subject, side) and ordered by first
    appearance.
    """
    groups = {}
    for i, key in enumerate(coeffs.keys):
        if len(key) < 2:
            raise DataError(f"cannot group key {key!r}: need (subject, side)")
        groups.setdefault((key[0], key[1]), []).append(i)
    if not groups:
        raise DataError("empty coefficient set")
    keys = list(groups)
    rows = np.stack([coeffs.coeffs[idx].mean(axis=0) for idx in groups.values()])
    return CoefficientSet(keys, rows, coeffs.layout)


# ---------------------------------------------------------------------------
# Split multivariate construction
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SplitBasis:
    """K multivariate functions obtained by cutting a univariate system.

    Function k's component in dimension p is the restriction of univariate
    function k to [p*T, (p+1)*T], re-parameterized to [0, T]. If the source
    system is orthonormal on [0, P*T], the multivariate set is orthonormal
    under the summed per-dimension inner product.
    """

    base: BasisSystem
    n_dims: int

    @property
    def size(self):
        return self.base.size

    @property
    def component_domain(self):
        lo, hi = self.base.domain
        return (0.0, (hi - lo) / self.n_dims)

    def eval_dimension(self, p, grid):
        """(len(grid), K) values of every function's p-th component."""
        if not 0 <= p < self.n_dims:
            raise ValueError(f"dimension index {p} out of range")
        grid = np.asarray(grid, dtype=float)
        lo, _ = self.base.domain
        t0, t1 = self.component_domain
        if grid.size and (grid.min() < t0 - 1e-12 or grid.max() > t1 * (1 + 1e-12)):
            raise ValueError("grid outside the component domain")
        return eval_basis(self.base, lo + p * t1 + grid)


def split_multivariate_basis(univariate, n_dims, n_quad=4001):
    """Build the split multivariate basis from an orthonormal univariate one.

    The univariate system must be orthonormal on its full domain (Gram within
    1e-6 of the identity, checked with `n_quad` Simpson points).
    """
    if n_dims < 1:
        raise ConfigurationError("n_dims must be >= 1")
    G = gram_matrix(univariate, n_quad)
    dev = np.abs(G - np.eye(univariate.size)).max()
    if dev > 1e-6:
        raise ConfigurationError(
            f"univariate system is not orthonormal (max Gram deviation {dev:.2e})"
        )
    return SplitBasis(univariate, int(n_dims))
