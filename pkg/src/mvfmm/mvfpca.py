"""Multivariate functional PCA on stacked univariate basis coefficients.

With per-dimension expansions y^(p)(t) = sum_m theta_m^(p) B_m^(p)(t), the
concatenated coefficient vector theta (length M) represents a multivariate
function, and the summed per-dimension L2 inner product becomes the bilinear
form <f, g> = theta_f' W theta_g with W the block-diagonal Gram matrix.
Eigenfunctions of the sample covariance operator are found by a symmetric
eigenproblem in the W^(1/2)-transformed space:

    A = (n-1)^(-1) W^(1/2) Theta_c' Theta_c W^(1/2),   c_k = W^(-1/2) b_k,

where Theta_c is the row-centered coefficient matrix and (nu_k, b_k) are the
eigenpairs of A in descending order. The c_k rows are W-orthonormal, scores
are theta' W c_k, and the sample variance of training score k equals nu_k.
"""

import json
from dataclasses import dataclass

import numpy as np

from .basis import BasisSystem, DimensionLayout, eval_basis
from .errors import DataError, NumericalError

__all__ = [
    "MvFpcBasis",
    "ScoreMatrix",
    "basis_from_dict",
    "basis_from_json",
    "basis_to_dict",
    "basis_to_json",
    "mvfpca_fit",
    "project_scores",
    "reconstruct",
    "scree_report",
]


@dataclass
class MvFpcBasis:
    """Truncated multivariate FPC basis in coefficient space.

    eigencoefs rows are the c_k vectors (W-orthonormal); `bases` carries the
    per-dimension univariate systems needed to evaluate on a grid and may be
    None for purely coefficient-space work.
    """

    mean: np.ndarray  # (M,)
    eigenvalues: np.ndarray  # (K,) descending, nonnegative
    eigencoefs: np.ndarray  # (K, M)
    gram: np.ndarray  # (M, M) block-diagonal metric W
    layout: DimensionLayout
    pve: np.ndarray  # (K,) cumulative proportion of variance
    total_variance: float
    bases: tuple = None  # per-dimension BasisSystem, layout order

    @property
    def n_components(self):
        return self.eigenvalues.size

    @property
    def n_dims(self):
        return len(self.layout.names)

    def component_curves(self, grid):
        """Evaluate every eigenfunction: array (P, len(grid), K)."""
        if self.bases is None:
            raise ValueError("basis systems were not attached; cannot evaluate")
        return component_curves(self.eigencoefs, self.layout, self.bases, grid)

    def mean_curves(self, grid):
        """Mean function per dimension: array (P, len(grid))."""
        if self.bases is None:
            raise ValueError("basis systems were not attached; cannot evaluate")
        out = np.empty((self.n_dims, np.asarray(grid).size))
        for p in range(self.n_dims):
            E = eval_basis(self.bases[p], grid)
            out[p] = E @ self.mean[self.layout.block(p)]
        return out


@dataclass
class ScoreMatrix:
    """FPC scores, one row per coefficient row, one column per component."""

    keys: list
    scores: np.ndarray  # (n, K)


def component_curves(eigencoefs, layout, bases, grid):
    """Evaluate coefficient-space functions on a grid, per dimension.

    Returns (P, len(grid), K) with K the number of rows in `eigencoefs`.
    """
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    n_dims = len(layout.names)
    out = np.empty((n_dims, grid.size, eigencoefs.shape[0]))
    for p in range(n_dims):
        E = eval_basis(bases[p], grid)  # (G, K_p)
        out[p] = E @ eigencoefs[:, layout.block(p)].T
    return out


def _metric_roots(gram):
    """Symmetric square root of W and its inverse, guarding the spectrum."""
    gram = 0.5 * (gram + gram.T)
    vals, vecs = np.linalg.eigh(gram)
    vmax = vals.max()
    if vmax <= 0 or vals.min() < 1e-12 * vmax:
        raise NumericalError(
            "gram metric numerically singular "
            f"(min/max eigenvalue ratio {vals.min() / vmax:.2e})"
        )
    vals = np.maximum(vals, 1e-12 * vmax)
    root = (vecs * np.sqrt(vals)) @ vecs.T
    inv_root = (vecs / np.sqrt(vals)) @ vecs.T
    return root, inv_root


def _fix_signs(eigencoefs):
    """Make the largest-|entry| component of each row positive (first on ties)."""
    for row in eigencoefs:
        if row[int(np.argmax(np.abs(row)))] < 0:
            row *= -1.0
    return eigencoefs


def mvfpca_fit(coeffs, grams, pve_target=0.9999, k_max=None, bases=None):
    """Fit the multivariate FPC basis from a CoefficientSet.

    `grams` maps dimension label -> Gram matrix (or is a sequence in layout
    order). Truncation keeps the smallest K whose cumulative eigenvalue share
    reaches `pve_target`, capped at `k_max` (default min(n-1, M)); eigenvalues
    below 1e-12 of the leading one are always discarded.
    """
    if not 0.0 < pve_target <= 1.0:
        raise ValueError("pve_target must lie in (0, 1]")
    n, M = coeffs.coeffs.shape
    if n < 2:
        raise DataError(f"need at least 2 rows to fit an FPC basis, got {n}")
    layout = coeffs.layout

    if isinstance(grams, dict):
        gram_list = [np.asarray(grams[name]) for name in layout.names]
    else:
        gram_list = [np.asarray(g) for g in grams]
    for g, size in zip(gram_list, layout.sizes):
        if g.shape != (size, size):
            raise ValueError("gram block shape does not match layout")
    W = np.zeros((M, M))
    for p, g in enumerate(gram_list):
        W[layout.block(p), layout.block(p)] = g

    root, inv_root = _metric_roots(W)
    mean = coeffs.coeffs.mean(axis=0)
    centered = coeffs.coeffs - mean
    half = centered @ root  # (n, M)
    A = half.T @ half / (n - 1)
    vals, vecs = np.linalg.eigh(A)
    vals = vals[::-1]
    vecs = vecs[:, ::-1]

    total = float(np.clip(vals, 0.0, None).sum())
    if total <= 0.0:
        raise DataError("coefficient rows carry no variance")
    keep = vals > 1e-12 * vals[0]
    vals = np.clip(vals[keep], 0.0, None)
    vecs = vecs[:, keep]

    cumulative = np.cumsum(vals) / total
    k_pve = int(np.searchsorted(cumulative, pve_target - 1e-15) + 1)
    k_cap = min(n - 1, M) if k_max is None else int(k_max)
    k = min(max(k_pve, 1), k_cap, vals.size)

    eigencoefs = _fix_signs((inv_root @ vecs[:, :k]).T)
    if bases is not None and isinstance(bases, dict):
        bases = tuple(bases[name] for name in layout.names)
    elif bases is not None:
        bases = tuple(bases)
    return MvFpcBasis(
        mean=mean,
        eigenvalues=vals[:k],
        eigencoefs=eigencoefs,
        gram=W,
        layout=layout,
        pve=cumulative[:k],
        total_variance=total,
        bases=bases,
    )


def project_scores(basis, coeffs, centered=False):
    """Project coefficient rows onto the FPC basis.

    score_ik = (theta_i - centering)' W c_k with centering = mean when
    `centered` else 0. The model pipeline projects raw rows (centered=False)
    and lets the per-score intercept absorb the mean.
    """
    if coeffs.layout != basis.layout:
        raise ValueError(
            f"coefficient layout {coeffs.layout} does not match basis layout "
            f"{basis.layout}"
        )
    theta = coeffs.coeffs - basis.mean if centered else coeffs.coeffs
    scores = theta @ (basis.gram @ basis.eigencoefs.T)
    return ScoreMatrix(keys=list(coeffs.keys), scores=scores)


def reconstruct(basis, scores, grid, centered=False):
    """Evaluate score-weighted eigenfunction sums on a grid.

    Returns (P, n_rows, len(grid)); adds the mean function back when the
    scores were computed from centered rows.
    """
    psi = basis.component_curves(grid)  # (P, G, K)
    S = scores.scores if isinstance(scores, ScoreMatrix) else np.asarray(scores)
    S = np.atleast_2d(S)
    out = np.einsum("nk,pgk->png", S, psi)
    if centered:
        out += basis.mean_curves(grid)[:, None, :]
    return out


def scree_report(basis):
    """Rows of (component index, eigenvalue, cumulative PVE)."""
    return [
        (k + 1, float(basis.eigenvalues[k]), float(basis.pve[k]))
        for k in range(basis.n_components)
    ]


# ---------------------------------------------------------------------------
# JSON round trip
# ---------------------------------------------------------------------------


def _basis_system_to_dict(b):
    return {
        "kind": b.kind,
        "size": b.size,
        "domain": list(b.domain),
        "order": b.order,
        "knots": list(b.knots),
    }


def _basis_system_from_dict(d):
    return BasisSystem(
        kind=d["kind"],
        size=int(d["size"]),
        domain=tuple(d["domain"]),
        order=int(d["order"]),
        knots=tuple(d["knots"]),
    )


def basis_to_dict(basis):
    """JSON-ready dict form of an MvFpcBasis (floats round-trip exactly)."""
    return {
        "mean": basis.mean.tolist(),
        "eigenvalues": basis.eigenvalues.tolist(),
        "eigencoefs": basis.eigencoefs.tolist(),
        "gram": basis.gram.tolist(),
        "layout": {"names": list(basis.layout.names), "sizes": list(basis.layout.sizes)},
        "pve": basis.pve.tolist(),
        "total_variance": basis.total_variance,
        "bases": None
        if basis.bases is None
        else [_basis_system_to_dict(b) for b in basis.bases],
    }


def basis_from_dict(d):
    layout = DimensionLayout(tuple(d["layout"]["names"]), tuple(d["layout"]["sizes"]))
    bases = d["bases"]
    return MvFpcBasis(
        mean=np.array(d["mean"]),
        eigenvalues=np.array(d["eigenvalues"]),
        eigencoefs=np.array(d["eigencoefs"]),
        gram=np.array(d["gram"]),
        layout=layout,
        pve=np.array(d["pve"]),
        total_variance=float(d["total_variance"]),
        bases=None if bases is None else tuple(_basis_system_from_dict(b) for b in bases),
    )


def basis_to_json(basis):
    return json.dumps(basis_to_dict(basis))


def basis_from_json(text):
    return basis_from_dict(json.loads(text))
