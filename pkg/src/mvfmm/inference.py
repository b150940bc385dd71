"""Pointwise intervals, bootstrap of subjects, simultaneous bands.

Simultaneous bands follow the max-statistic recipe: draw R coefficient
vectors from a Gaussian centered at the estimate, push each through the
eigenfunctions on the grid, take the (1-alpha) empirical quantile of

    z_r = max over dimensions and grid points of |deviation(t)| / se(t),

and widen the pointwise standard-error envelope by that multiplier. The
covariance feeding the draws is either the bootstrap estimate (full K x K)
or the Wald diagonal, matching the two inference routes.

The bootstrap resamples whole subjects with replacement; every draw becomes
a fresh pseudo-ID carrying the subject's observations and covariates, scores
are projections onto the original (fixed) FPC basis, and the per-score REML
fits are repeated on the resampled design. Replicate r always uses the RNG
stream derived from (seed, r), so results do not depend on scheduling.
"""

from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .errors import ConfigurationError, NumericalError
from .fitting import build_design, fit_model
from .lmm import SuffStats, _fit_from_stats
from .mvfpca import project_scores

__all__ = [
    "Band",
    "BootstrapResult",
    "bootstrap_of_subjects",
    "icc_interval",
    "mc_se",
    "percentile_interval",
    "pointwise_band",
    "simultaneous_band",
    "wald_pointwise",
]

# grid points with se below this fraction of max(se) are excluded from the
# max statistic (division blow-up guard)
SE_EXCLUSION_RATIO = 1e-12


@dataclass
class Band:
    """A confidence band for one effect across all dimensions and grid points."""

    effect: int
    effect_name: str
    grid: np.ndarray
    dim_names: tuple
    point: np.ndarray  # (P, G)
    se: np.ndarray  # (P, G)
    lower: np.ndarray  # point - multiplier * se, exactly
    upper: np.ndarray  # point + multiplier * se, exactly
    kind: str  # pointwise_wald | pointwise_boot | simultaneous
    level: float
    multiplier: float
    clamped: bool = False  # negative pointwise variances clamped to 0
    excluded: np.ndarray = None  # (P, G) mask of points left out of the max

    def covers(self, truth):
        """Pointwise containment mask of a (P, G) truth array."""
        return (self.lower <= truth) & (truth <= self.upper)


def _finish_band(model, a, grid, se, kind, level, multiplier, **kw):
    point = np.einsum("pgk,k->pg", model.basis.component_curves(grid), model.Bstar[a])
    return Band(
        effect=a,
        effect_name=model.effect_names[a],
        grid=np.asarray(grid, dtype=float),
        dim_names=tuple(model.dim_names),
        point=point,
        se=se,
        lower=point - multiplier * se,
        upper=point + multiplier * se,
        kind=kind,
        level=level,
        multiplier=multiplier,
        **kw,
    )


def _se_from_cov(model, a, grid, cov):
    """Pointwise standard errors sqrt(Psi(t)' Sigma Psi(t)) per dimension."""
    psi = model.basis.component_curves(grid)  # (P, G, K)
    cov = np.asarray(cov)
    if cov.ndim == 1:
        var = np.einsum("pgk,k->pg", psi**2, cov)
    else:
        var = np.einsum("pgk,kl,pgl->pg", psi, cov, psi, optimize=True)
    clamped = bool(np.any(var < 0))
    return np.sqrt(np.clip(var, 0.0, None)), clamped


def wald_pointwise(model, a, grid, level=0.95):
    """Pointwise Wald interval from the diagonal per-score variances."""
    if not 0 <= a < model.n_effects:
        raise ValueError(f"effect index {a} out of range")
    se, clamped = _se_from_cov(model, a, grid, model.wald_var[a])
    multiplier = float(norm.ppf(0.5 + level / 2.0))
    return _finish_band(
        model, a, grid, se, "pointwise_wald", level, multiplier, clamped=clamped
    )


def pointwise_band(model, a, grid, cov, level=0.95, kind="pointwise_boot"):
    """Pointwise interval with se taken from an arbitrary score covariance."""
    se, clamped = _se_from_cov(model, a, grid, cov)
    multiplier = float(norm.ppf(0.5 + level / 2.0))
    return _finish_band(model, a, grid, se, kind, level, multiplier, clamped=clamped)


# ---------------------------------------------------------------------------
# Bootstrap of subjects
# ---------------------------------------------------------------------------


@dataclass
class BootstrapResult:
    """Replicate-level estimates and their empirical covariances."""

    B: int  # replicates kept (failures excluded)
    effects: np.ndarray  # (B, A+1, K) replicate fixed-effect coefficients
    sigma: np.ndarray  # (A+1, K, K) empirical covariance per effect
    q_samples: np.ndarray  # (B, K)
    s_samples: np.ndarray  # (B, K)
    icc_samples: np.ndarray  # (B,)
    seed: int
    failures: int


def _per_subject_stats(X, Y, subject_of_row):
    """Stack per-subject sufficient-statistic pieces for fast resampling."""
    subjects, inverse = np.unique(subject_of_row, return_inverse=True)
    N = subjects.size
    n, p = X.shape
    m = Y.shape[1]
    n_i = np.bincount(inverse, minlength=N).astype(float)
    Xsum = np.zeros((N, p))
    np.add.at(Xsum, inverse, X)
    Ysum = np.zeros((N, m))
    np.add.at(Ysum, inverse, Y)
    XtX = np.zeros((N, p, p))
    np.add.at(XtX, inverse, X[:, :, None] * X[:, None, :])
    XtY = np.zeros((N, p, m))
    np.add.at(XtY, inverse, X[:, :, None] * Y[:, None, :])
    yty = np.zeros((N, m))
    np.add.at(yty, inverse, Y * Y)
    return N, n_i, Xsum, Ysum, XtX, XtY, yty


def bootstrap_of_subjects(
    data,
    spec,
    B,
    seed,
    pve=0.9999,
    model=None,
    identity_resample=False,
):
    """Nonparametric bootstrap of subjects against a fixed FPC basis.

    Resampled subjects become pseudo-IDs; their curves are re-projected onto
    the basis of the original fit (projection of an unchanged curve equals
    its original score row, so rows are gathered, not recomputed) and all
    per-score models are refitted. `identity_resample` keeps every subject
    exactly once, a hook for degenerate-variance tests.
    """
    if B < 2:
        raise ConfigurationError(f"bootstrap needs B >= 2 replicates, got {B}")
    if model is None:
        model = fit_model(data, spec, pve=pve)
    scores = project_scores(model.basis, data.coeffs, centered=False).scores
    X, _, _ = build_design(spec, data.covariates, data.coeffs.keys)
    subject_of_row = np.asarray([key[0] for key in data.coeffs.keys])
    N, n_i, Xsum, Ysum, XtX, XtY, yty = _per_subject_stats(X, scores, subject_of_row)

    kept, q_all, s_all, icc_all = [], [], [], []
    failures = 0
    for r in range(B):
        if identity_resample:
            idx = np.arange(N)
        else:
            rng = np.random.default_rng([seed, r])
            idx = rng.integers(0, N, N)
        stats = SuffStats(
            n_g=n_i[idx],
            Xsum=Xsum[idx],
            Ysum=Ysum[idx],
            XtX=XtX[idx].sum(axis=0),
            XtY=XtY[idx].sum(axis=0),
            yty=yty[idx].sum(axis=0),
            n=n_i[idx].sum(),
        )
        try:
            fit = _fit_from_stats(stats)
        except (NumericalError, np.linalg.LinAlgError):
            failures += 1
            continue
        kept.append(fit.beta.T)  # (A+1, K)
        q_all.append(fit.q)
        s_all.append(fit.s)
        qsum, ssum = fit.q.sum(), fit.s.sum()
        icc_all.append(qsum / (qsum + ssum) if qsum + ssum > 0 else 0.0)

    if not kept:
        raise NumericalError("all bootstrap replicates failed")
    effects = np.stack(kept)  # (B_ok, A+1, K)
    n_eff, K = effects.shape[1], effects.shape[2]
    sigma = np.empty((n_eff, K, K))
    for a in range(n_eff):
        centered = effects[:, a, :] - effects[:, a, :].mean(axis=0)
        sigma[a] = centered.T @ centered / max(effects.shape[0] - 1, 1)
    return BootstrapResult(
        B=effects.shape[0],
        effects=effects,
        sigma=sigma,
        q_samples=np.stack(q_all),
        s_samples=np.stack(s_all),
        icc_samples=np.asarray(icc_all),
        seed=seed,
        failures=failures,
    )


# ---------------------------------------------------------------------------
# Simultaneous bands
# ---------------------------------------------------------------------------


def max_statistic_quantile(deviations, se, level, excluded):
    """(1-alpha) ceiling-index order statistic of the per-draw max ratios.

    `deviations` is (R, P, G), `se` is (P, G); excluded points are dropped
    from the max. Returns 0.0 when every point is excluded.
    """
    valid = ~excluded
    if not np.any(valid):
        return 0.0
    R = deviations.shape[0]
    ratios = np.abs(deviations[:, valid]) / se[valid][None, :]
    z = ratios.max(axis=1)
    order = int(np.ceil(R * level))
    return float(np.sort(z)[order - 1])


def simultaneous_band(model, a, grid, cov=None, R=10000, level=0.95, seed=0):
    """Simultaneous confidence band over all dimensions and grid points.

    `cov` is the score covariance for effect a: a full (K, K) matrix
    (bootstrap route), a length-K diagonal (Wald route), or None to use the
    stored bootstrap covariance if present and the Wald diagonal otherwise.
    """
    if cov is None:
        cov = model.boot_cov.get(a, model.wald_var[a])
    cov = np.asarray(cov, dtype=float)
    if cov.ndim == 1:
        cov = np.diag(cov)
    cov = 0.5 * (cov + cov.T)
    vals, vecs = np.linalg.eigh(cov)
    vmax = max(vals.max(), 0.0)
    if vals.min() < -1e-8 * max(vmax, 1e-300):
        raise NumericalError(
            f"score covariance is not PSD (min eigenvalue {vals.min():.3e})"
        )
    vals = np.clip(vals, 0.0, None)

    se, _ = _se_from_cov(model, a, grid, cov)
    excluded = se < SE_EXCLUSION_RATIO * se.max() if se.max() > 0 else np.ones_like(se, bool)

    rng = np.random.default_rng(seed)
    draws = rng.standard_normal((R, cov.shape[0])) * np.sqrt(vals) @ vecs.T  # (R, K)
    psi = model.basis.component_curves(grid)  # (P, G, K)
    deviations = np.einsum("rk,pgk->rpg", draws, psi, optimize=True)
    z = max_statistic_quantile(deviations, se, level, excluded)
    return _finish_band(
        model, a, grid, se, "simultaneous", level, z, excluded=excluded
    )


# ---------------------------------------------------------------------------
# Scalar summaries
# ---------------------------------------------------------------------------


def percentile_interval(samples, level=0.95):
    """Percentile interval by ceiling-index order statistics."""
    samples = np.sort(np.asarray(samples, dtype=float))
    B = samples.size
    alpha = 1.0 - level
    lo = int(np.ceil(B * alpha / 2.0))
    hi = int(np.ceil(B * (1.0 - alpha / 2.0)))
    return float(samples[max(lo, 1) - 1]), float(samples[hi - 1])


def icc_interval(boot, level=0.95):
    """Bootstrap percentile interval for the ICC."""
    if boot.B < 20:
        raise ConfigurationError(f"need >= 20 bootstrap replicates, got {boot.B}")
    return percentile_interval(boot.icc_samples, level)


def mc_se(p_hat, n_sim):
    """Monte Carlo standard error of a coverage proportion."""
    if not 0.0 <= p_hat <= 1.0:
        raise ValueError("proportion must lie in [0, 1]")
    if n_sim < 1:
        raise ValueError("n_sim must be >= 1")
    return float(np.sqrt(p_hat * (1.0 - p_hat) / n_sim))
