"""Figure rendering for the CLI report paths.

Every report command writes its figures next to the CSV output so results
can be inspected without re-plotting. All functions save to a file path and
return it; nothing is shown interactively.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "plot_bands",
    "plot_coverage_profile",
    "plot_effects",
    "plot_icc_distribution",
    "plot_ise_boxes",
    "plot_scree",
    "plot_surfaces",
]

plt.rcParams.update(
    {
        "figure.dpi": 110,
        "axes.grid": True,
        "grid.alpha": 0.3,
        "font.size": 9,
    }
)


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_effects(model, grid, curves_by_effect, path, bands=None):
    """Fixed-effect functions per dimension, optionally with bands."""
    n_eff = len(curves_by_effect)
    dims = model.dim_names
    fig, axes = plt.subplots(
        len(dims), n_eff, figsize=(2.6 * n_eff, 2.4 * len(dims)), squeeze=False
    )
    for a, curves in enumerate(curves_by_effect):
        for p, dim in enumerate(dims):
            ax = axes[p][a]
            ax.plot(grid, curves[p], color="C0", lw=1.4)
            if bands is not None:
                for band in bands:
                    if band.effect != a:
                        continue
                    style = dict(color="C1", alpha=0.25) if band.kind == "simultaneous" else dict(color="C2", alpha=0.35)
                    ax.fill_between(grid, band.lower[p], band.upper[p], **style)
            ax.axhline(0.0, color="0.4", lw=0.7)
            if p == 0:
                ax.set_title(model.effect_names[a])
            if a == 0:
                ax.set_ylabel(dim)
    return _save(fig, path)


def plot_bands(bands, path):
    """Point estimate with pointwise and simultaneous envelopes per effect."""
    effects = sorted({b.effect for b in bands})
    dims = bands[0].dim_names
    fig, axes = plt.subplots(
        len(dims), len(effects), figsize=(2.8 * len(effects), 2.4 * len(dims)),
        squeeze=False,
    )
    for col, a in enumerate(effects):
        for p, dim in enumerate(dims):
            ax = axes[p][col]
            for band in bands:
                if band.effect != a:
                    continue
                if band.kind == "simultaneous":
                    ax.fill_between(
                        band.grid, band.lower[p], band.upper[p],
                        color="C1", alpha=0.25, label="simultaneous",
                    )
                else:
                    ax.plot(band.grid, band.lower[p], "C2--", lw=0.9)
                    ax.plot(band.grid, band.upper[p], "C2--", lw=0.9)
                ax.plot(band.grid, band.point[p], "C0", lw=1.3)
                name = band.effect_name
            ax.axhline(0.0, color="0.4", lw=0.7)
            if p == 0:
                ax.set_title(name)
            if col == 0:
                ax.set_ylabel(dim)
    return _save(fig, path)


def plot_scree(basis, path):
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(6.4, 2.6))
    k = np.arange(1, basis.n_components + 1)
    ax1.plot(k, basis.eigenvalues, "o-", ms=3)
    ax1.set_xlabel("component")
    ax1.set_ylabel("eigenvalue")
    ax2.plot(k, 100 * basis.pve, "o-", ms=3)
    ax2.axhline(95, color="0.4", ls="--", lw=0.8)
    ax2.axhline(99, color="0.4", ls=":", lw=0.8)
    ax2.set_xlabel("component")
    ax2.set_ylabel("cumulative PVE (%)")
    return _save(fig, path)


def plot_surfaces(surfaces, path):
    """Filled-contour panels of covariance blocks, one row per surface."""
    n_rows = len(surfaces)
    dims = surfaces[0][1].dim_names
    P = len(dims)
    fig, axes = plt.subplots(
        n_rows, P * P, figsize=(2.3 * P * P, 2.2 * n_rows), squeeze=False
    )
    for r, (label, surf) in enumerate(surfaces):
        for p in range(P):
            for q in range(P):
                ax = axes[r][p * P + q]
                cs = ax.contourf(
                    surf.grid, surf.grid, surf.blocks[p, q].T, levels=15,
                    cmap="RdBu_r",
                )
                fig.colorbar(cs, ax=ax, shrink=0.85)
                ax.set_title(f"{label}: {dims[p]}-{dims[q]}", fontsize=8)
                ax.grid(False)
    return _save(fig, path)


def plot_coverage_profile(study, path):
    """Per-point coverage along the function, per method and effect."""
    from .sim import DIMENSIONS, METHODS

    grid = study.config.grid
    fig, axes = plt.subplots(2, 3, figsize=(9.0, 4.6), squeeze=False)
    for p, dim in enumerate(DIMENSIONS):
        for a in range(3):
            ax = axes[p][a]
            for m, method in enumerate(METHODS):
                profile = study.coverage_profile(method, a)
                ax.plot(grid, profile[p], lw=1.1, label=method if (p == 0 and a == 0) else None)
            ax.axhline(study.level, color="k", lw=0.8)
            ax.set_ylim(0.8, 1.0)
            if p == 0:
                ax.set_title(f"beta{a}")
            if a == 0:
                ax.set_ylabel(f"{dim}\ncoverage")
    fig.legend(loc="lower center", ncol=2, frameon=False)
    return _save(fig, path)


def plot_ise_boxes(study, path):
    """ISE distributions: fixed effects, then Q and S vs the unstructured fit."""
    fig, axes = plt.subplots(1, 3, figsize=(9.0, 2.8))
    axes[0].boxplot(
        [study.ise_beta[:, a] for a in range(3)], tick_labels=["beta0", "beta1", "beta2"]
    )
    axes[0].set_ylabel("ISE")
    axes[0].set_title("fixed effects")
    has_unstr = bool(np.all(np.isfinite(study.ise_q_unstr)))
    q_data = [study.ise_q_model] + ([study.ise_q_unstr] if has_unstr else [])
    s_data = [study.ise_s_model] + ([study.ise_s_unstr] if has_unstr else [])
    labels = ["model"] + (["unstructured"] if has_unstr else [])
    axes[1].boxplot(q_data, tick_labels=labels)
    axes[1].set_title("Q surface")
    axes[2].boxplot(s_data, tick_labels=labels)
    axes[2].set_title("S surface")
    return _save(fig, path)


def plot_icc_distribution(study, path):
    fig, ax = plt.subplots(figsize=(4.0, 2.8))
    ax.hist(study.icc, bins=25, color="C0", alpha=0.8)
    ax.axvline(study.config.true_icc, color="k", lw=1.2)
    ax.set_xlabel("ICC estimate")
    ax.set_ylabel("replicates")
    return _save(fig, path)
