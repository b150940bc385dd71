"""Command-line front end: fit, bands, simulate, unstructured.

Every command writes its outputs plus a run manifest into --out. Exit codes:
0 success, 2 configuration error, 3 data error, 4 numerical error.
"""

import argparse
import hashlib
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, plots, serialize
from .errors import ConfigurationError, MvfmmError
from .fitting import (
    CovariateSpec,
    ModelSpec,
    effect_function,
    fit_model,
    model_from_json,
    model_to_json,
    reconstruct_Q,
    reconstruct_S,
)
from .inference import bootstrap_of_subjects, pointwise_band, simultaneous_band, wald_pointwise
from .ingest import parse_long_csv, prepare_dataset
from .sim import FULL_SCALE, REDUCED_SCALE, ScenarioConfig, report, run_study
from .unstructured import center_by_fixed_effects, cov_ise, surface, unstructured_fit

__all__ = ["main"]


def _default_threads():
    env = os.environ.get("MVFMM_THREADS")
    if env:
        return int(env)
    return os.cpu_count()


def _load_config(path):
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except FileNotFoundError:
        raise ConfigurationError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config file {path} is not valid JSON: {exc}") from None
    version = cfg.pop("schema_version", 1)
    if version != 1:
        raise ConfigurationError(f"unsupported config schema_version {version}")
    return cfg


def _config_hash(payload):
    return hashlib.sha256(
        json.dumps(payload, sort_keys=True, default=str).encode()
    ).hexdigest()


def _write_manifest(outdir, command, config, seeds, inputs, outputs, t0):
    manifest = {
        "command": command,
        "config_hash": _config_hash(config),
        "config": config,
        "seeds": seeds,
        "inputs": [str(p) for p in inputs],
        "outputs": sorted(str(p) for p in outputs),
        "wall_time_s": round(time.monotonic() - t0, 3),
        "version": __version__,
    }
    path = Path(outdir) / "manifest.json"
    tmp = path.with_suffix(".json.tmp")
    tmp.write_text(json.dumps(manifest, indent=2))
    os.replace(tmp, path)
    return path


def _model_spec_from_config(cfg, covariates):
    """Covariate coding from config, defaulting to every table column."""
    entries = cfg.get("covariates")
    if entries is None:
        entries = []
        for name in covariates.columns:
            values = [row[name] for row in covariates.rows.values()]
            numeric = all(isinstance(v, float) for v in values)
            entries.append({"name": name, "kind": "continuous" if numeric else "categorical"})
    specs = []
    for e in entries:
        specs.append(
            CovariateSpec(
                name=e["name"],
                kind=e.get("kind", "continuous"),
                center=e.get("center", True),
                reference=e.get("reference"),
            )
        )
    return ModelSpec(covariates=specs, grouping=cfg.get("grouping", "subject"))


def _prepare(args, cfg):
    curves, covariates = parse_long_csv(args.curves, args.covariates)
    data = prepare_dataset(
        curves,
        covariates,
        basis_size=cfg.get("basis_size", 80),
        n_grid=cfg.get("n_grid", 101),
        domain_end=cfg.get("domain_end", 100.0),
        landmark_dim=cfg.get("landmark_dim"),
        target=cfg.get("target"),
    )
    return data, covariates


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_fit(args):
    t0 = time.monotonic()
    cfg = _load_config(args.config)
    if args.pve is not None:
        cfg["pve"] = args.pve
    if args.basis_size is not None:
        cfg["basis_size"] = args.basis_size
    if args.landmark_dim is not None:
        cfg["landmark_dim"] = args.landmark_dim

    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    data, covariates = _prepare(args, cfg)
    spec = _model_spec_from_config(cfg, covariates)
    model = fit_model(data, spec, pve=cfg.get("pve", 0.9999))

    grid = data.grid
    outputs = []
    model_path = outdir / "model.json"
    model_path.write_text(model_to_json(model))
    outputs.append(model_path)

    curves_by_effect = [
        effect_function(model, a, grid) for a in range(model.n_effects)
    ]
    outputs.append(
        serialize.write_effects_csv(outdir / "effects.csv", model, grid, curves_by_effect)
    )
    q_surf = reconstruct_Q(model, grid)
    s_surf = reconstruct_S(model, grid)
    outputs.append(
        serialize.write_surface_csv(outdir / "surfaces.csv", [("Q", q_surf), ("S", s_surf)])
    )
    outputs.append(serialize.write_scree_csv(outdir / "scree.csv", model.basis))
    icc_path = outdir / "icc.json"
    icc_path.write_text(json.dumps({"icc": model.icc}))
    outputs.append(icc_path)

    if args.figures:
        outputs.append(plots.plot_effects(model, grid, curves_by_effect, outdir / "effects.png"))
        outputs.append(plots.plot_scree(model.basis, outdir / "scree.png"))
        outputs.append(
            plots.plot_surfaces([("Q", q_surf), ("S", s_surf)], outdir / "surfaces.png")
        )

    outputs.append(
        _write_manifest(
            outdir, "fit", cfg, {}, [args.curves, args.covariates], outputs, t0
        )
    )
    return 0


def cmd_bands(args):
    t0 = time.monotonic()
    cfg = _load_config(args.config)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    model = model_from_json(Path(args.model).read_text())
    grid = np.linspace(0.0, cfg.get("domain_end", 100.0), cfg.get("n_grid", 101))

    bands = []
    if args.method == "wald":
        for a in range(model.n_effects):
            bands.append(wald_pointwise(model, a, grid, args.level))
            bands.append(
                simultaneous_band(
                    model, a, grid, cov=model.wald_var[a], R=args.R,
                    level=args.level, seed=(args.seed, 2, a),
                )
            )
    else:
        if args.B < 2:
            raise ConfigurationError(f"bootstrap needs --B >= 2, got {args.B}")
        if not args.curves or not args.covariates:
            raise ConfigurationError(
                "bootstrap bands need --curves and --covariates to resample"
            )
        data, _ = _prepare(args, cfg)
        boot = bootstrap_of_subjects(
            data, model.spec, args.B, seed=args.seed, model=model
        )
        for a in range(model.n_effects):
            bands.append(pointwise_band(model, a, grid, boot.sigma[a], args.level))
            bands.append(
                simultaneous_band(
                    model, a, grid, cov=boot.sigma[a], R=args.R,
                    level=args.level, seed=(args.seed, 3, a),
                )
            )

    outputs = [serialize.write_bands_csv(outdir / "bands.csv", bands)]
    if args.figures:
        outputs.append(plots.plot_bands(bands, outdir / "bands.png"))
    outputs.append(
        _write_manifest(
            outdir,
            "bands",
            {**cfg, "method": args.method, "B": args.B, "R": args.R, "level": args.level},
            {"seed": args.seed},
            [args.model] + ([args.curves, args.covariates] if args.method == "bootstrap" else []),
            outputs,
            t0,
        )
    )
    return 0


def cmd_simulate(args):
    t0 = time.monotonic()
    cfg_file = _load_config(args.config)
    scale = FULL_SCALE if args.full_scale else REDUCED_SCALE
    reps = args.reps if args.reps is not None else scale["n_reps"]
    B = args.B if args.B is not None else scale["B"]
    R = args.R if args.R is not None else scale["R"]

    scenario_cfg = ScenarioConfig.from_dict(
        {**cfg_file, "scenario": args.scenario, "seed": args.seed}
    )
    study = run_study(
        scenario_cfg,
        reps,
        B=B,
        R=R,
        level=args.level,
        threads=args.threads,
        with_inference=not args.no_inference,
    )
    outdir = Path(args.out)
    outputs = list(report(study, outdir))
    if args.figures:
        if study.with_inference:
            outputs.append(plots.plot_coverage_profile(study, outdir / "coverage_profile.png"))
        outputs.append(plots.plot_ise_boxes(study, outdir / "ise_boxes.png"))
        outputs.append(plots.plot_icc_distribution(study, outdir / "icc_distribution.png"))
    outputs.append(
        _write_manifest(
            outdir,
            "simulate",
            {**scenario_cfg.to_dict(), "n_reps": reps, "B": B, "R": R, "level": args.level},
            {"seed": args.seed},
            [args.config] if args.config else [],
            outputs,
            t0,
        )
    )
    return 0


def cmd_unstructured(args):
    t0 = time.monotonic()
    cfg = _load_config(args.config)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    model = model_from_json(Path(args.model).read_text())
    data, _ = _prepare(args, cfg)

    centered = center_by_fixed_effects(data, model)
    groups = [key[0] for key in data.coeffs.keys]
    ucov = unstructured_fit(centered, groups)
    grid = data.grid
    q_unstr = surface(ucov, "Q", grid, data.bases)
    s_unstr = surface(ucov, "S", grid, data.bases)
    q_model = reconstruct_Q(model, grid)
    s_model = reconstruct_S(model, grid)

    outputs = [
        serialize.write_surface_csv(
            outdir / "unstructured_surfaces.csv", [("Q", q_unstr), ("S", s_unstr)]
        )
    ]
    comparison = {
        "ise_Q_model_vs_unstructured": cov_ise(q_model, q_unstr),
        "ise_S_model_vs_unstructured": cov_ise(s_model, s_unstr),
    }
    cmp_path = outdir / "comparison.json"
    cmp_path.write_text(json.dumps(comparison, indent=2))
    outputs.append(cmp_path)
    if args.figures:
        outputs.append(
            plots.plot_surfaces(
                [("Q model", q_model), ("Q unstructured", q_unstr),
                 ("S model", s_model), ("S unstructured", s_unstr)],
                outdir / "unstructured.png",
            )
        )
    outputs.append(
        _write_manifest(
            outdir, "unstructured", cfg, {},
            [args.model, args.curves, args.covariates], outputs, t0,
        )
    )
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(
        prog="mvfmm",
        description="Multivariate functional mixed models: fit, bands, simulate, unstructured",
    )
    parser.add_argument("--threads", type=int, default=_default_threads(),
                        help="worker processes for parallel stages")
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="fit the model to curve + covariate CSVs")
    p_fit.add_argument("curves")
    p_fit.add_argument("covariates")
    p_fit.add_argument("--out", required=True)
    p_fit.add_argument("--config")
    p_fit.add_argument("--pve", type=float)
    p_fit.add_argument("--basis-size", type=int, dest="basis_size")
    p_fit.add_argument("--landmark-dim", dest="landmark_dim")
    p_fit.add_argument("--no-figures", dest="figures", action="store_false")
    p_fit.set_defaults(func=cmd_fit)

    p_bands = sub.add_parser("bands", help="confidence bands for a fitted model")
    p_bands.add_argument("--model", required=True)
    p_bands.add_argument("--curves")
    p_bands.add_argument("--covariates")
    p_bands.add_argument("--out", required=True)
    p_bands.add_argument("--config")
    p_bands.add_argument("--method", choices=("wald", "bootstrap"), default="wald")
    p_bands.add_argument("--B", type=int, default=200)
    p_bands.add_argument("--R", type=int, default=10000)
    p_bands.add_argument("--level", type=float, default=0.95)
    p_bands.add_argument("--seed", type=int, default=0)
    p_bands.add_argument("--no-figures", dest="figures", action="store_false")
    p_bands.set_defaults(func=cmd_bands)

    p_sim = sub.add_parser("simulate", help="run the two-scenario coverage study")
    p_sim.add_argument("--scenario", type=int, choices=(1, 2), default=1)
    p_sim.add_argument("--out", required=True)
    p_sim.add_argument("--config")
    p_sim.add_argument("--reps", type=int)
    p_sim.add_argument("--B", type=int)
    p_sim.add_argument("--R", type=int)
    p_sim.add_argument("--level", type=float, default=0.95)
    p_sim.add_argument("--seed", type=int, default=20260301)
    p_sim.add_argument("--full-scale", dest="full_scale", action="store_true")
    p_sim.add_argument("--no-inference", dest="no_inference", action="store_true")
    p_sim.add_argument("--no-figures", dest="figures", action="store_false")
    p_sim.set_defaults(func=cmd_simulate)

    p_unstr = sub.add_parser("unstructured", help="method-of-moments Q/S comparison")
    p_unstr.add_argument("--model", required=True)
    p_unstr.add_argument("--curves", required=True)
    p_unstr.add_argument("--covariates", required=True)
    p_unstr.add_argument("--out", required=True)
    p_unstr.add_argument("--config")
    p_unstr.add_argument("--no-figures", dest="figures", action="store_false")
    p_unstr.set_defaults(func=cmd_unstructured)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except MvfmmError as exc:
        print(f"mvfmm {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"mvfmm {args.command}: missing file: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
