"""Method-of-moments covariance estimates without the diagonal restriction.

With fixed effects removed, the coefficient rows theta_ij satisfy

    E[theta_ij theta_i'j''] = delta_ii' * Q + delta_ii' delta_jj' * S

for M x M coefficient matrices Q and S of the covariance surfaces under the
tensor-product basis. Regressing the Kronecker response rows on the two
design columns vec(ZZ') and vec(I) is a per-cell two-regressor least squares
problem whose normal equations share one 2 x 2 system across all M^2 cells:

    [ a  b ] [q_cell]   [A1_cell]        a = sum_i n_i^2,  A1 = sum_i T_i T_i'
    [ b  b ] [s_cell] = [A2_cell],       b = n_rows,       A2 = sum_r th_r th_r'

with T_i the within-subject row sums. Solving gives Q = (A1 - A2)/(a - b)
and S = (a*A2 - b*A1)/(b*(a - b)); the dense Kronecker construction is kept
only as a size-guarded reference implementation for equivalence testing.
"""

from dataclasses import dataclass

import numpy as np

from .basis import eval_basis
from .errors import DataError
from .fitting import CovarianceSurface, build_design

__all__ = [
    "UnstructuredCov",
    "center_by_fixed_effects",
    "cov_ise",
    "dense_reference_fit",
    "surface",
    "unstructured_fit",
]


@dataclass
class UnstructuredCov:
    """Symmetrized M x M coefficient matrices of Q and S."""

    qmat: np.ndarray
    smat: np.ndarray
    layout: object  # DimensionLayout


def unstructured_fit(centered, groups):
    """Fit Q and S coefficient matrices from fixed-effect-centered rows.

    `centered` is a CoefficientSet whose rows have the fitted means removed;
    `groups` assigns each row to a subject. All-singleton grouping leaves Q
    unidentifiable and raises DataError.
    """
    theta = centered.coeffs
    groups = np.asarray(groups)
    _, inverse = np.unique(groups, return_inverse=True)
    N = inverse.max() + 1
    n_i = np.bincount(inverse, minlength=N).astype(float)

    T = np.zeros((N, theta.shape[1]))
    np.add.at(T, inverse, theta)
    A1 = T.T @ T  # sum_i T_i T_i'
    A2 = theta.T @ theta  # sum_r theta_r theta_r'
    a = float((n_i**2).sum())
    b = float(n_i.sum())
    if a <= b:
        raise DataError(
            "random-intercept covariance unidentifiable: every subject has a "
            "single observation"
        )
    qmat = (A1 - A2) / (a - b)
    smat = (a * A2 - b * A1) / (b * (a - b))
    return UnstructuredCov(
        qmat=0.5 * (qmat + qmat.T),
        smat=0.5 * (smat + smat.T),
        layout=centered.layout,
    )


def dense_reference_fit(centered, groups, max_rows=12, max_size=4):
    """Reference solve of the full Kronecker least-squares problem.

    Builds the (n_rows^2, 2) design [vec(ZZ') | vec(I)] and the
    (n_rows^2, M^2) Kronecker response explicitly; only usable on tiny
    instances and guarded accordingly.
    """
    theta = centered.coeffs
    n, M = theta.shape
    if n > max_rows or M > max_size:
        raise ValueError(
            f"dense construction limited to {max_rows} rows / size {max_size}"
        )
    groups = np.asarray(groups)
    same = (groups[:, None] == groups[None, :]).astype(float)
    design = np.column_stack([same.ravel(), np.eye(n).ravel()])
    response = np.kron(theta, theta)  # row i*n+j = theta_i (x) theta_j
    coef, *_ = np.linalg.lstsq(design, response, rcond=None)
    qmat = coef[0].reshape(M, M)
    smat = coef[1].reshape(M, M)
    return UnstructuredCov(
        qmat=0.5 * (qmat + qmat.T),
        smat=0.5 * (smat + smat.T),
        layout=centered.layout,
    )


def center_by_fixed_effects(data, model):
    """Subtract each row's fitted mean (in coefficient space) from the data.

    The fitted mean of row (i, j) is sum_k (x_ij' Bstar)_k c_k; components of
    the raw rows outside the FPC span are kept, so the residual rows still
    carry everything the fixed effects do not explain.
    """
    X, _, _ = build_design(model.spec, data.covariates, data.coeffs.keys)
    mean_scores = X @ model.Bstar  # (n, K)
    fitted = mean_scores @ model.basis.eigencoefs  # (n, M)
    out = type(data.coeffs)(
        keys=list(data.coeffs.keys),
        coeffs=data.coeffs.coeffs - fitted,
        layout=data.coeffs.layout,
    )
    return out


def surface(unstructured, which, grid, bases):
    """Evaluate the tensor expansion of Q or S on a grid.

    `bases` maps dimension label -> BasisSystem (or is a sequence in layout
    order). The result is symmetrized so that C^(pq)(t,t') == C^(qp)(t',t).
    """
    mat = {"Q": unstructured.qmat, "S": unstructured.smat}.get(which)
    if mat is None:
        raise ValueError(f"which must be 'Q' or 'S', got {which!r}")
    layout = unstructured.layout
    if isinstance(bases, dict):
        bases = [bases[name] for name in layout.names]
    grid = np.asarray(grid, dtype=float)
    evals = [eval_basis(b, grid) for b in bases]  # per dim (G, K_p)
    P = len(layout.names)
    G = grid.size
    blocks = np.empty((P, P, G, G))
    for p in range(P):
        for q in range(P):
            blocks[p, q] = evals[p] @ mat[layout.block(p), layout.block(q)] @ evals[q].T
    blocks = 0.5 * (blocks + blocks.transpose(1, 0, 3, 2))
    return CovarianceSurface(grid=grid, dim_names=tuple(layout.names), blocks=blocks)


def cov_ise(estimate, reference):
    """Integrated squared error between two covariance surfaces.

    Double trapezoid over the shared grid, summed over all dimension pairs.
    """
    if estimate.grid.shape != reference.grid.shape or np.any(
        estimate.grid != reference.grid
    ):
        raise ValueError("covariance surfaces live on different grids")
    if estimate.dim_names != reference.dim_names:
        raise ValueError("covariance surfaces have different dimension layouts")
    diff2 = (estimate.blocks - reference.blocks) ** 2
    total = 0.0
    for p in range(diff2.shape[0]):
        for q in range(diff2.shape[1]):
            inner = np.trapezoid(diff2[p, q], estimate.grid, axis=1)
            total += float(np.trapezoid(inner, estimate.grid))
    return total
