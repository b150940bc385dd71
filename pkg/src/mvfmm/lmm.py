"""Scalar Gaussian mixed model with a single random intercept, by REML.

The covariance of the response in group i is s * (I + lambda * J_i) with
lambda = q/s, so V_i^{-1} = I - (lambda/(1+lambda*n_i)) J_i and
log|V| = sum_i log(1 + lambda*n_i): no n x n matrix is ever formed. The
restricted likelihood profiled over beta and s,

    l_R(lambda) = -1/2 [ log|V| + (n-p) log(r'V^{-1}r) + log|X'V^{-1}X| ],

is maximized by golden-section search on log(1+lambda), followed by an
explicit comparison with the lambda=0 boundary. All per-group algebra runs
on sufficient statistics (group sizes, group sums of X and y, global
cross-products), vectorized across response columns so the per-score fits
of the functional model share one pass.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DataError, NumericalError

__all__ = [
    "LmmDesign",
    "LmmFit",
    "MultiFit",
    "SuffStats",
    "fitted_blups",
    "profile_loglik",
    "reml_fit",
    "reml_fit_multi",
]

_INVPHI = (np.sqrt(5.0) - 1.0) / 2.0


@dataclass
class LmmDesign:
    """Response, fixed design (intercept column first) and group labels."""

    y: np.ndarray  # (n,)
    X: np.ndarray  # (n, p)
    groups: np.ndarray  # (n,) labels

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float)
        self.X = np.asarray(self.X, dtype=float)
        self.groups = np.asarray(self.groups)
        n, p = self.X.shape
        if self.y.shape != (n,):
            raise ValueError("response length does not match design rows")
        if self.groups.shape != (n,):
            raise ValueError("group labels length does not match design rows")
        if n <= p:
            raise DataError(f"need more observations ({n}) than fixed effects ({p})")
        if np.linalg.matrix_rank(self.X) < p:
            raise NumericalError("fixed-effect design matrix is rank deficient")


@dataclass
class LmmFit:
    """REML result for one response column."""

    beta: np.ndarray  # (p,)
    beta_cov: np.ndarray  # (p, p), (X'V^{-1}X)^{-1} * s
    q: float  # random-intercept variance, >= 0
    s: float  # residual variance, > 0
    lam: float  # q / s
    reml_value: float
    converged: bool
    boundary: bool  # True when the lambda=0 boundary won
    hit_upper: bool  # True when the optimum sat at lambda_max


@dataclass
class MultiFit:
    """Vectorized REML results across m response columns."""

    beta: np.ndarray  # (m, p)
    beta_cov: np.ndarray  # (m, p, p)
    q: np.ndarray  # (m,)
    s: np.ndarray  # (m,)
    lam: np.ndarray  # (m,)
    reml_value: np.ndarray  # (m,)
    converged: np.ndarray  # (m,) bool
    boundary: np.ndarray  # (m,) bool
    hit_upper: np.ndarray  # (m,) bool


class SuffStats:
    """Per-group sufficient statistics for one design and m response columns."""

    def __init__(self, n_g, Xsum, Ysum, XtX, XtY, yty, n):
        self.n_g = n_g  # (G,)
        self.Xsum = Xsum  # (G, p) group sums of design rows
        self.Ysum = Ysum  # (G, m) group sums of responses
        self.XtX = XtX  # (p, p)
        self.XtY = XtY  # (p, m)
        self.yty = yty  # (m,)
        self.n = int(n)
        self.p = XtX.shape[0]
        self.m = XtY.shape[1]

    @classmethod
    def from_rows(cls, X, Y, groups):
        X = np.asarray(X, dtype=float)
        Y = np.asarray(Y, dtype=float)
        if Y.ndim == 1:
            Y = Y[:, None]
        _, inverse = np.unique(groups, return_inverse=True)
        G = inverse.max() + 1
        n, p = X.shape
        n_g = np.bincount(inverse, minlength=G).astype(float)
        if np.any(n_g == 0):
            raise DataError("empty group in design")
        Xsum = np.zeros((G, p))
        np.add.at(Xsum, inverse, X)
        Ysum = np.zeros((G, Y.shape[1]))
        np.add.at(Ysum, inverse, Y)
        return cls(
            n_g=n_g,
            Xsum=Xsum,
            Ysum=Ysum,
            XtX=X.T @ X,
            XtY=X.T @ Y,
            yty=(Y * Y).sum(axis=0),
            n=n,
        )


def _profile(stats, lam):
    """Restricted log-likelihood pieces at per-column lambda values.

    `lam` is an (m,) vector. Returns (ll, beta, XtVinvX, XtVinvY, rss) with
    batched shapes (m,), (m, p), (m, p, p), (m, p), (m,).
    """
    lam = np.asarray(lam, dtype=float)
    c = lam[:, None] / (1.0 + lam[:, None] * stats.n_g[None, :])  # (m, G)
    XtVinvX = stats.XtX[None] - np.einsum(
        "mg,gp,gq->mpq", c, stats.Xsum, stats.Xsum, optimize=True
    )
    XtVinvY = stats.XtY.T - np.einsum(
        "mg,gp->mp", c * stats.Ysum.T, stats.Xsum, optimize=True
    )
    ytVinvy = stats.yty - (c * stats.Ysum.T**2).sum(axis=1)
    logdetV = np.log1p(lam[:, None] * stats.n_g[None, :]).sum(axis=1)

    beta = np.linalg.solve(XtVinvX, XtVinvY[..., None])[..., 0]
    rss = ytVinvy - (beta * XtVinvY).sum(axis=1)
    sign, logdetXtVinvX = np.linalg.slogdet(XtVinvX)
    bad = (sign <= 0) | (rss <= 0) | ~np.isfinite(rss)
    if np.any(bad):
        raise NumericalError(
            f"non-finite restricted likelihood at lambda={lam[bad][:4]}"
        )
    ll = -0.5 * (logdetV + (stats.n - stats.p) * np.log(rss) + logdetXtVinvX)
    return ll, beta, XtVinvX, XtVinvY, rss


def _golden_max(stats, g_hi, tol, max_iter):
    """Vectorized golden-section maximization of l_R over g = log(1+lambda)."""
    m = stats.m
    a = np.zeros(m)
    b = np.full(m, g_hi)
    x1 = b - _INVPHI * (b - a)
    x2 = a + _INVPHI * (b - a)
    f1, *_ = _profile(stats, np.expm1(x1))
    f2, *_ = _profile(stats, np.expm1(x2))
    needed = int(np.ceil(np.log(tol / g_hi) / np.log(_INVPHI))) if g_hi > tol else 0
    n_iter = min(max(needed, 0), max_iter)
    for _ in range(n_iter):
        take_left = f1 >= f2
        b = np.where(take_left, x2, b)
        a = np.where(take_left, a, x1)
        x1_new = np.where(take_left, b - _INVPHI * (b - a), x2)
        x2_new = np.where(take_left, x1, a + _INVPHI * (b - a))
        f1_old, f2_old = f1, f2
        x1, x2 = x1_new, x2_new
        need_eval = np.where(take_left, x1, x2)
        f_new, *_ = _profile(stats, np.expm1(need_eval))
        f1 = np.where(take_left, f_new, f2_old)
        f2 = np.where(take_left, f1_old, f_new)
    converged = needed <= max_iter
    return 0.5 * (a + b), converged


def _fit_from_stats(stats, lambda_max=1e6, tol=1e-10, max_iter=200):
    g_hi = np.log1p(lambda_max)
    g_star, converged = _golden_max(stats, g_hi, tol, max_iter)
    lam = np.expm1(g_star)

    ll_int, *_ = _profile(stats, lam)
    ll_zero, *_ = _profile(stats, np.zeros(stats.m))
    boundary = ll_zero >= ll_int
    lam = np.where(boundary, 0.0, lam)
    hit_upper = ~boundary & (g_star >= g_hi - max(10 * tol, 1e-9))

    ll, beta, XtVinvX, _, rss = _profile(stats, lam)
    s = rss / (stats.n - stats.p)
    q = lam * s
    cov = np.linalg.inv(XtVinvX) * s[:, None, None]
    cov = 0.5 * (cov + np.swapaxes(cov, 1, 2))
    return MultiFit(
        beta=beta,
        beta_cov=cov,
        q=q,
        s=s,
        lam=lam,
        reml_value=ll,
        converged=np.full(stats.m, converged),
        boundary=boundary,
        hit_upper=hit_upper,
    )


def reml_fit_multi(X, Y, groups, lambda_max=1e6, tol=1e-10, max_iter=200):
    """Profiled REML for every column of Y under a shared design and grouping."""
    X = np.asarray(X, dtype=float)
    n, p = X.shape
    if n <= p:
        raise DataError(f"need more observations ({n}) than fixed effects ({p})")
    if np.linalg.matrix_rank(X) < p:
        raise NumericalError("fixed-effect design matrix is rank deficient")
    stats = SuffStats.from_rows(X, Y, groups)
    return _fit_from_stats(stats, lambda_max, tol, max_iter)


def reml_fit(design, lambda_max=1e6, tol=1e-10, max_iter=200):
    """Profiled REML fit of a single-response LmmDesign."""
    stats = SuffStats.from_rows(design.X, design.y, design.groups)
    multi = _fit_from_stats(stats, lambda_max, tol, max_iter)
    return LmmFit(
        beta=multi.beta[0],
        beta_cov=multi.beta_cov[0],
        q=float(multi.q[0]),
        s=float(multi.s[0]),
        lam=float(multi.lam[0]),
        reml_value=float(multi.reml_value[0]),
        converged=bool(multi.converged[0]),
        boundary=bool(multi.boundary[0]),
        hit_upper=bool(multi.hit_upper[0]),
    )


def profile_loglik(design, lam):
    """Restricted log-likelihood l_R(lambda), up to an additive constant."""
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    stats = SuffStats.from_rows(design.X, design.y, design.groups)
    ll, *_ = _profile(stats, np.array([float(lam)]))
    return float(ll[0])


def fitted_blups(fit, design):
    """Predicted random intercepts: shrunken group means of GLS residuals.

    u_i = (lambda * n_i / (1 + lambda * n_i)) * mean(residuals in group i).
    Returns (group labels, predictions) in label-sorted order.
    """
    labels, inverse = np.unique(design.groups, return_inverse=True)
    resid = design.y - design.X @ fit.beta
    n_g = np.bincount(inverse).astype(float)
    rbar = np.bincount(inverse, weights=resid) / n_g
    shrink = fit.lam * n_g / (1.0 + fit.lam * n_g)
    return labels, shrink * rbar
