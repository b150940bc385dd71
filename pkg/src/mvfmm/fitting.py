"""End-to-end model fitting: FPC scores in, functional estimates out.

The pipeline projects every (subject, side) coefficient row onto the fitted
FPC basis without centering, fits one random-intercept REML model per score
column with a shared fixed design and subject grouping, and keeps the
per-score estimates in basis space. Fixed-effect functions, covariance
surfaces and predictions are reconstructed on demand by combining the
coefficient-space estimates with the eigenfunctions.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, NumericalError
from .lmm import reml_fit_multi
from .mvfpca import basis_from_dict, basis_to_dict, mvfpca_fit, project_scores

__all__ = [
    "CovariateSpec",
    "CovarianceSurface",
    "FittedModel",
    "ModelSpec",
    "build_design",
    "effect_function",
    "fit_model",
    "icc",
    "model_from_json",
    "model_to_json",
    "predict_mean",
    "reconstruct_Q",
    "reconstruct_S",
]


# ---------------------------------------------------------------------------
# Model specification and design coding
# ---------------------------------------------------------------------------


@dataclass
class CovariateSpec:
    """Coding instructions for one covariate.

    Continuous covariates are centered by the training mean when `center`;
    categorical covariates are dummy-coded against `reference` (defaults to
    the lexicographically first observed level).
    """

    name: str
    kind: str = "continuous"
    center: bool = True
    reference: str = None

    def __post_init__(self):
        if self.kind not in ("continuous", "categorical"):
            raise ConfigurationError(f"unknown covariate kind {self.kind!r}")


@dataclass
class ModelSpec:
    covariates: list  # of CovariateSpec
    grouping: str = "subject"


@dataclass
class EffectCoding:
    """How one design column (one effect) is built from the covariates."""

    covariate: str  # source covariate name; "" for the intercept
    kind: str  # "intercept" | "continuous" | "categorical"
    center: float = 0.0  # subtracted value (continuous)
    level: str = None  # dummy level (categorical)
    levels: tuple = ()  # all observed levels incl. reference (categorical)
    reference: str = None


def build_design(spec, covariates, keys):
    """Design matrix, effect names and fitted coding for the given rows.

    `keys` are (subject, side) tuples in row order; covariate values come
    from the CovariateTable. Returns (X, effect_names, codings).
    """
    rows = [covariates.lookup(k[0], k[1]) for k in keys]
    columns = [np.ones(len(rows))]
    names = ["intercept"]
    codings = [EffectCoding("", "intercept")]
    for cov in spec.covariates:
        values = []
        for r in rows:
            if cov.name not in r:
                raise ConfigurationError(f"covariate {cov.name!r} missing from table")
            values.append(r[cov.name])
        if cov.kind == "continuous":
            vals = np.asarray([float(v) for v in values])
            center = float(vals.mean()) if cov.center else 0.0
            columns.append(vals - center)
            names.append(cov.name)
            codings.append(EffectCoding(cov.name, "continuous", center=center))
        else:
            levels = sorted({str(v) for v in values})
            reference = cov.reference if cov.reference is not None else levels[0]
            if reference not in levels:
                raise ConfigurationError(
                    f"reference level {reference!r} for {cov.name!r} not observed "
                    f"(levels: {levels})"
                )
            for level in levels:
                if level == reference:
                    continue
                columns.append(
                    np.asarray([1.0 if str(v) == level else 0.0 for v in values])
                )
                names.append(f"{cov.name}[{level}]")
                codings.append(
                    EffectCoding(
                        cov.name,
                        "categorical",
                        level=level,
                        levels=tuple(levels),
                        reference=reference,
                    )
                )
    X = np.column_stack(columns)
    if np.linalg.matrix_rank(X) < X.shape[1]:
        raise NumericalError("model design matrix is rank deficient")
    return X, names, codings


def encode_covariates(codings, values):
    """Build the x-vector for `predict_mean` from a covariate dict.

    Missing continuous covariates default to their centered mean (x = 0);
    missing categorical ones to the reference level. Unknown categorical
    levels raise ConfigurationError.
    """
    x = np.zeros(len(codings))
    x[0] = 1.0
    for name, value in values.items():
        if not any(c.covariate == name for c in codings[1:]):
            raise ConfigurationError(f"unknown covariate {name!r}")
    for j, c in enumerate(codings):
        if c.kind == "continuous" and c.covariate in values:
            x[j] = float(values[c.covariate]) - c.center
        elif c.kind == "categorical" and c.covariate in values:
            level = str(values[c.covariate])
            if level not in c.levels:
                raise ConfigurationError(
                    f"unknown level {level!r} for covariate {c.covariate!r} "
                    f"(levels: {list(c.levels)})"
                )
            x[j] = 1.0 if level == c.level else 0.0
    return x


# ---------------------------------------------------------------------------
# Fitted model
# ---------------------------------------------------------------------------


@dataclass
class FittedModel:
    """Basis-space estimates plus everything needed to evaluate on a grid."""

    basis: object  # MvFpcBasis
    spec: ModelSpec
    effect_names: list
    codings: list  # EffectCoding per design column
    Bstar: np.ndarray  # (A+1, K) fixed-effect coefficients
    wald_var: np.ndarray  # (A+1, K) Var(beta*_ak) diagonals
    qstar: np.ndarray  # (K,) random-intercept variances
    sstar: np.ndarray  # (K,) residual variances
    lambdas: np.ndarray  # (K,)
    boundary: np.ndarray  # (K,) bool, lambda pinned at 0
    hit_upper: np.ndarray  # (K,) bool, lambda hit the search cap
    icc: float
    boot_cov: dict = field(default_factory=dict)  # effect index -> (K, K)

    @property
    def n_effects(self):
        return self.Bstar.shape[0]

    @property
    def n_components(self):
        return self.Bstar.shape[1]

    @property
    def dim_names(self):
        return self.basis.layout.names


@dataclass
class CovarianceSurface:
    """Matrix-valued covariance on a t x t' grid: blocks[p, q] = C^(pq)(t, t')."""

    grid: np.ndarray
    dim_names: tuple
    blocks: np.ndarray  # (P, P, G, G)

    def stacked(self):
        """The full (P*G, P*G) matrix, PSD for model reconstructions."""
        P, _, G, _ = self.blocks.shape
        return self.blocks.transpose(0, 2, 1, 3).reshape(P * G, P * G)


def fit_model(data, spec, pve=0.9999, k_max=None):
    """Fit the full pipeline on a prepared FunctionalDataset."""
    basis = mvfpca_fit(data.coeffs, data.grams, pve_target=pve, k_max=k_max,
                       bases=data.bases)
    scores = project_scores(basis, data.coeffs, centered=False)
    X, names, codings = build_design(spec, data.covariates, data.coeffs.keys)
    groups = np.asarray([key[0] for key in data.coeffs.keys])
    multi = reml_fit_multi(X, scores.scores, groups)
    if not np.all(multi.converged):
        bad = np.flatnonzero(~multi.converged).tolist()
        raise NumericalError(f"score fits did not converge for components {bad}")
    qsum = float(multi.q.sum())
    ssum = float(multi.s.sum())
    if qsum + ssum <= 0:
        raise NumericalError("ICC undefined: zero total variance")
    return FittedModel(
        basis=basis,
        spec=spec,
        effect_names=names,
        codings=codings,
        Bstar=multi.beta.T.copy(),
        wald_var=np.diagonal(multi.beta_cov, axis1=1, axis2=2).T.copy(),
        qstar=multi.q,
        sstar=multi.s,
        lambdas=multi.lam,
        boundary=multi.boundary,
        hit_upper=multi.hit_upper,
        icc=qsum / (qsum + ssum),
    )


def effect_function(model, a, grid):
    """Fixed-effect function a on the grid, per dimension: (P, len(grid))."""
    if not 0 <= a < model.n_effects:
        raise ValueError(f"effect index {a} out of range")
    psi = model.basis.component_curves(grid)  # (P, G, K)
    return np.einsum("pgk,k->pg", psi, model.Bstar[a])


def predict_mean(model, values, grid):
    """Predicted mean curves for a covariate setting: (P, len(grid))."""
    x = encode_covariates(model.codings, values)
    return np.einsum("pgk,k->pg", model.basis.component_curves(grid), model.Bstar.T @ x)


def _variance_surface(model, diag, grid):
    psi = model.basis.component_curves(grid)  # (P, G, K)
    P = psi.shape[0]
    G = np.asarray(grid).size
    blocks = np.empty((P, P, G, G))
    for p in range(P):
        wp = psi[p] * diag  # (G, K)
        for q in range(P):
            blocks[p, q] = wp @ psi[q].T
    # exact symmetry of the whole surface: C^(pq)(t,t') == C^(qp)(t',t)
    blocks = 0.5 * (blocks + blocks.transpose(1, 0, 3, 2))
    return CovarianceSurface(
        grid=np.asarray(grid, dtype=float),
        dim_names=tuple(model.dim_names),
        blocks=blocks,
    )


def reconstruct_Q(model, grid):
    """Random-intercept covariance surface Psi(t)' diag(q) Psi(t')."""
    return _variance_surface(model, model.qstar, grid)


def reconstruct_S(model, grid):
    """Random-error covariance surface Psi(t)' diag(s) Psi(t')."""
    return _variance_surface(model, model.sstar, grid)


def icc(model):
    """Share of residual variability attributable to between-subject differences."""
    qsum = float(model.qstar.sum())
    ssum = float(model.sstar.sum())
    if qsum + ssum <= 0:
        raise NumericalError("ICC undefined: zero total variance")
    return qsum / (qsum + ssum)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def model_to_json(model):
    payload = {
        "schema_version": 1,
        "spec": {
            "grouping": model.spec.grouping,
            "covariates": [
                {
                    "name": c.name,
                    "kind": c.kind,
                    "center": c.center,
                    "reference": c.reference,
                }
                for c in model.spec.covariates
            ],
        },
        "effect_names": list(model.effect_names),
        "codings": [
            {
                "covariate": c.covariate,
                "kind": c.kind,
                "center": c.center,
                "level": c.level,
                "levels": list(c.levels),
                "reference": c.reference,
            }
            for c in model.codings
        ],
        "Bstar": model.Bstar.tolist(),
        "wald_var": model.wald_var.tolist(),
        "qstar": model.qstar.tolist(),
        "sstar": model.sstar.tolist(),
        "lambdas": model.lambdas.tolist(),
        "boundary": model.boundary.astype(bool).tolist(),
        "hit_upper": model.hit_upper.astype(bool).tolist(),
        "icc": model.icc,
        "boot_cov": {str(k): v.tolist() for k, v in model.boot_cov.items()},
        "basis": basis_to_dict(model.basis),
    }
    return json.dumps(payload)


def model_from_json(text):
    d = json.loads(text)
    spec = ModelSpec(
        covariates=[
            CovariateSpec(
                name=c["name"],
                kind=c["kind"],
                center=c["center"],
                reference=c["reference"],
            )
            for c in d["spec"]["covariates"]
        ],
        grouping=d["spec"]["grouping"],
    )
    codings = [
        EffectCoding(
            covariate=c["covariate"],
            kind=c["kind"],
            center=c["center"],
            level=c["level"],
            levels=tuple(c["levels"]),
            reference=c["reference"],
        )
        for c in d["codings"]
    ]
    return FittedModel(
        basis=basis_from_dict(d["basis"]),
        spec=spec,
        effect_names=list(d["effect_names"]),
        codings=codings,
        Bstar=np.array(d["Bstar"]),
        wald_var=np.array(d["wald_var"]),
        qstar=np.array(d["qstar"]),
        sstar=np.array(d["sstar"]),
        lambdas=np.array(d["lambdas"]),
        boundary=np.array(d["boundary"], dtype=bool),
        hit_upper=np.array(d["hit_upper"], dtype=bool),
        icc=float(d["icc"]),
        boot_cov={int(k): np.array(v) for k, v in d["boot_cov"].items()},
    )
