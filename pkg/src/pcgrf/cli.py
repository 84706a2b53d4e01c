"""Command-line front end.

Subcommands cover hyperparameter calibration, prior density evaluation,
field simulation, posterior fitting, the spectral-divergence check, and
the four studies.  Every run writes its outputs (CSV plus figures) and a
JSON manifest into the chosen directory; identical configurations yield
byte-identical CSVs on one platform.

Exit codes: 0 success, 2 usage, 3 validation, 4 numerical failure,
5 threshold violation under ``--check``.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .matern import Design, FactorizationError, MaternParams
from .mcmc import McmcConfig, chain_to_csv, equal_tailed_ci, rw_metropolis
from .nonstat import CalibrationError, raster_to_csv
from .priors import (
    PriorJeffreys,
    PriorLogUniformRange,
    PriorPC,
    PriorUniformRange,
    bounded_uniform_logdensity,
    calibrate_pc,
    discrete_kld,
    jeffreys_rule_logdensity,
    pc_logdensity,
    prior_from_json,
    prior_to_json,
    scaled_kld,
)
from .rng import substream

EXIT_VALIDATION = 3
EXIT_NUMERICAL = 4
EXIT_CHECK_FAILED = 5


class CheckFailure(RuntimeError):
    """A configured acceptance threshold was violated in --check mode."""


def _outdir(args) -> Path:
    out = os.environ.get("PCGRF_OUT") or args.out
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_manifest(args, study: str, outdir: Path, outputs, extra=None) -> None:
    from .experiments import StudyManifest

    params = {k: v for k, v in vars(args).items() if k not in ("func", "out")}
    if extra:
        params.update(extra)
    manifest = StudyManifest(
        study=study,
        seed=getattr(args, "seed", 0) or 0,
        design=[],
        chain={
            "iters": getattr(args, "iters", None),
            "burn_in": getattr(args, "burn_in", None),
        },
        parameters=params,
        outputs=[str(p) for p in outputs],
    )
    manifest.write(outdir / f"{study}.manifest.json")


def _load_prior(args):
    text = args.prior
    if Path(text).is_file():
        text = Path(text).read_text()
    if text.strip().startswith("{"):
        return prior_from_json(text)
    kind = text.strip().lower()
    if kind == "pc":
        return PriorPC(
            calibrate_pc(args.rho0, args.alpha_rho, args.sigma0, args.alpha_sigma, args.dim)
        )
    if kind == "jeffreys":
        return PriorJeffreys()
    if kind == "uniform":
        return PriorUniformRange(args.lower, args.upper)
    if kind == "log-uniform":
        return PriorLogUniformRange(args.lower, args.upper)
    raise ValueError(f"unknown prior {text!r}")


# ---------------------------------------------------------------------------
# Subcommand handlers
# ---------------------------------------------------------------------------


def cmd_calibrate(args) -> int:
    hyper = calibrate_pc(args.rho0, args.alpha_rho, args.sigma0, args.alpha_sigma, args.dim)
    print(f"lambda_range = {hyper.lambda_range:.6f}")
    print(f"lambda_sigma = {hyper.lambda_sigma:.6f}")
    if args.out:
        outdir = _outdir(args)
        path = outdir / "pc_hyper.json"
        path.write_text(json.dumps(prior_to_json(PriorPC(hyper)), indent=2, sort_keys=True) + "\n")
        _write_manifest(args, "calibrate", outdir, [path])
    return 0


def cmd_density(args) -> int:
    spec = _load_prior(args)
    if args.rho <= 0.0:
        raise ValueError(f"rho must be positive, got {args.rho}")
    if args.sigma2 <= 0.0:
        raise ValueError(f"sigma2 must be positive, got {args.sigma2}")
    sigma = math.sqrt(args.sigma2)
    if isinstance(spec, PriorPC):
        value = float(pc_logdensity(args.rho, args.sigma2, spec.hyper))
    elif isinstance(spec, PriorJeffreys):
        if not args.design:
            raise ValueError("the design-dependent prior needs --design")
        value = jeffreys_rule_logdensity(args.rho, sigma, Design.from_csv(args.design))
    else:
        value = float(bounded_uniform_logdensity(args.rho, sigma, spec))
    print(f"log_density = {value!r}")
    return 0


def cmd_simulate(args) -> int:
    from .figures import realization_figure
    from .grf import GeoModel, realization_to_csv, sample_geomodel, sample_grf

    if args.design:
        design = Design.from_csv(args.design)
    else:
        design = Design.random_uniform(args.n_locations, args.dim, substream(args.seed, 0))
    params = MaternParams(rho=args.rho, sigma2=args.sigma2, nu=args.nu, dim=design.dim)
    if args.beta0 is not None:
        covariate = np.zeros(design.n) if args.covariate is None else np.loadtxt(args.covariate)
        model = GeoModel(
            beta0=args.beta0, beta1=args.beta1 or 0.0, covariate_x=covariate,
            nugget_sd=args.nugget_sd, field=params,
        )
        real = sample_geomodel(model, design, (args.seed, 1))
    else:
        real = sample_grf(design, params, (args.seed, 1))
    outdir = _outdir(args)
    csv_path = outdir / "realization.csv"
    realization_to_csv(real, csv_path)
    outputs = [csv_path]
    if not args.no_figures:
        outputs.append(realization_figure(real, outdir / "realization.png"))
    _write_manifest(args, "simulate", outdir, outputs)
    print(f"wrote {csv_path}")
    return 0


def cmd_fit(args) -> int:
    from .experiments import make_logpost
    from .grf import realization_from_csv

    real = realization_from_csv(args.data)
    spec = _load_prior(args)
    logpost = make_logpost(real.values, real.design, spec)
    med = float(np.median(real.design.distances[np.triu_indices(real.design.n, 1)]))
    init = [math.log(med), math.log(max(float(np.var(real.values)), 1e-4))]
    if isinstance(spec, (PriorUniformRange, PriorLogUniformRange)):
        init[0] = min(max(init[0], math.log(spec.lower * 1.05)), math.log(spec.upper * 0.95))
    config = McmcConfig(iters=args.iters, burn_in=args.burn_in, seed=(args.seed, 2))
    chain = rw_metropolis(logpost, init, config, names=["log_rho", "log_sigma2"])
    outdir = _outdir(args)
    path = outdir / "chain.csv"
    chain_to_csv(chain, path, config)
    for name in chain.names:
        ci = equal_tailed_ci(np.exp(chain.column(name)), args.level)
        natural = name.replace("log_", "")
        print(f"{natural}: ci=({ci.lower!r}, {ci.upper!r})")
    _write_manifest(args, "fit", outdir, [path])
    return 0


def cmd_kld_check(args) -> int:
    from .figures import kld_convergence_figure

    base = scaled_kld(1.0, args.alpha, args.dim)
    worst = 0.0
    for kappa in (0.1, 0.5, 2.0, 10.0):
        ratio = scaled_kld(kappa, args.alpha, args.dim) / base
        worst = max(worst, abs(ratio - kappa**args.dim) / kappa**args.dim)
    rows = []
    for L in args.box_sizes:
        kappa0 = 1.0 / L**2
        kmax = int(40.0 * L / (2.0 * math.pi)) + 1
        val = (2.0 * math.pi / L) ** args.dim * discrete_kld(
            1.0, kappa0, args.alpha, args.dim, L, kmax
        )
        rows.append({"L": L, "kappa0": kappa0, "kmax": kmax, "scaled": val,
                     "rel_gap": abs(val - base) / base})
    print(f"scaled divergence at unit inverse range: {base!r}")
    print(f"max relative deviation from the power law: {worst:.3e}")
    for row in rows:
        print(f"L={row['L']:g}: scaled={row['scaled']:.6f} rel_gap={row['rel_gap']:.4%}")
    outputs = []
    if args.out:
        outdir = _outdir(args)
        report = outdir / "kld_check.csv"
        with open(report, "w", newline="") as fh:
            fh.write("L,kappa0,kmax,scaled,rel_gap\n")
            for row in rows:
                fh.write(
                    f"{row['L']!r},{row['kappa0']!r},{row['kmax']},"
                    f"{row['scaled']!r},{row['rel_gap']!r}\n"
                )
        outputs.append(report)
        if not args.no_figures:
            outputs.append(kld_convergence_figure(rows, base, outdir / "kld_check.png"))
        _write_manifest(args, "kld-check", outdir, outputs, extra={"scaling_law_dev": worst})
    if args.check:
        if worst > 1e-6:
            raise CheckFailure(f"power-law deviation {worst:.2e} exceeds 1e-6")
        if rows and rows[-1]["rel_gap"] > 0.02:
            raise CheckFailure(f"lattice limit gap {rows[-1]['rel_gap']:.2%} exceeds 2%")
    return 0


def _study_design(args) -> Design:
    if args.design:
        return Design.from_csv(args.design)
    return Design.random_uniform(25, 2, substream(args.design_seed, 0))


def cmd_coverage(args) -> int:
    from .experiments import (
        coverage_cells_to_csv,
        coverage_study,
        pc_row_hyper,
        self_calibration_study,
    )
    from .figures import coverage_figure

    design = _study_design(args)
    truth = MaternParams(rho=args.rho_t, sigma2=1.0, nu=0.5, dim=2)
    config = McmcConfig(iters=args.iters, burn_in=args.burn_in)
    cells = []
    for prior_name in args.priors:
        if prior_name == "pc":
            for row in args.rows:
                for sigma0 in args.sigma0s:
                    hyper = pc_row_hyper(row, args.rho_t, sigma0, absolute_rows=args.absolute_rows)
                    cells.append(
                        coverage_study(
                            PriorPC(hyper), truth, design, args.replicates, config, args.seed
                        )
                    )
        elif prior_name == "jeffreys":
            cells.append(
                coverage_study(PriorJeffreys(), truth, design, args.replicates, config, args.seed)
            )
        elif prior_name in ("uniform", "log-uniform"):
            ctor = PriorUniformRange if prior_name == "uniform" else PriorLogUniformRange
            for lower in args.lowers:
                for upper in args.uppers:
                    cells.append(
                        coverage_study(
                            ctor(lower, upper), truth, design, args.replicates, config, args.seed
                        )
                    )
        elif prior_name == "self-calibration":
            hyper = pc_row_hyper(args.rows[0], args.rho_t, args.sigma0s[0],
                                 absolute_rows=args.absolute_rows)
            cells.append(
                self_calibration_study(hyper, design, args.replicates, config, args.seed)
            )
        else:
            raise ValueError(f"unknown prior {prior_name!r}")
    outdir = _outdir(args)
    table = outdir / "coverage.csv"
    coverage_cells_to_csv(cells, table)
    outputs = [table]
    if not args.no_figures:
        outputs.append(coverage_figure(cells, outdir / "coverage.png"))
    _write_manifest(args, "coverage", outdir, outputs)
    for cell in cells:
        print(
            f"{cell.prior['type']}: range {cell.coverage_range:.3f} "
            f"[{cell.mean_ci_length_range:.3g}] variance {cell.coverage_variance:.3f} "
            f"[{cell.mean_ci_length_variance:.3g}]"
        )
    if args.check and args.min_coverage is not None:
        bad = [c for c in cells if min(c.coverage_range, c.coverage_variance) < args.min_coverage]
        if bad:
            raise CheckFailure(f"{len(bad)} cell(s) below coverage {args.min_coverage}")
    return 0


def cmd_ridge(args) -> int:
    from .experiments import ridge_study
    from .figures import ridge_figure
    from .grf import sample_grf

    design = _study_design(args)
    truth = MaternParams(rho=args.rho_t, sigma2=1.0, nu=0.5, dim=2)
    real = sample_grf(design, truth, (args.seed, 1))
    hyper = calibrate_pc(args.rho0, 0.05, args.sigma0, 0.05, 2)
    result = ridge_study(real, hyper, McmcConfig(iters=args.iters, burn_in=args.burn_in,
                                                 seed=(args.seed, 2)))
    outdir = _outdir(args)
    outputs = []
    for label, samples in result["samples"].items():
        path = outdir / f"ridge_samples_{label}.csv"
        with open(path, "w", newline="") as fh:
            fh.write("log_rho,log_sigma\n")
            for row in samples:
                fh.write(f"{float(row[0])!r},{float(row[1])!r}\n")
        outputs.append(path)
    summary_path = outdir / "ridge_summary.json"
    summary_path.write_text(json.dumps(result["summary"], indent=2, sort_keys=True) + "\n")
    outputs.append(summary_path)
    if not args.no_figures:
        outputs.append(ridge_figure(result, outdir / "ridge.png"))
    _write_manifest(args, "ridge", outdir, outputs)
    s = result["summary"]
    print(f"upper sigma quantile: jeffreys={s['jeffreys']['sigma_upper']:.3g} "
          f"pc={s['pc']['sigma_upper']:.3g}")
    print(f"jeffreys top-decile correlation: {s['jeffreys']['top_decile_correlation']:.3f}")
    if args.check and not s["jeffreys_sigma_upper_exceeds_pc"]:
        raise CheckFailure("expected the design-dependent prior to have the heavier upper tail")
    return 0


def cmd_logistic(args) -> int:
    from .experiments import coverage_cells_to_csv, logistic_coverage_study, pc_row_hyper
    from .figures import coverage_figure

    design = _study_design(args)
    truth = MaternParams(rho=args.rho_t, sigma2=1.0, nu=0.5, dim=2)
    config = McmcConfig(iters=args.iters, burn_in=args.burn_in)
    cells = []
    for row in args.rows:
        for sigma0 in args.sigma0s:
            hyper = pc_row_hyper(row, args.rho_t, sigma0, absolute_rows=args.absolute_rows)
            cells.append(
                logistic_coverage_study(
                    hyper, truth, design, args.replicates, config, args.seed, trials=args.trials
                )
            )
    outdir = _outdir(args)
    table = outdir / "logistic_coverage.csv"
    coverage_cells_to_csv(cells, table)
    outputs = [table]
    if not args.no_figures:
        outputs.append(coverage_figure(cells, outdir / "logistic_coverage.png"))
    _write_manifest(args, "logistic", outdir, outputs)
    for cell in cells:
        print(
            f"row cell: range {cell.coverage_range:.3f} [{cell.mean_ci_length_range:.3g}] "
            f"variance {cell.coverage_variance:.3f} [{cell.mean_ci_length_variance:.3g}]"
        )
    return 0


def cmd_nonstat(args) -> int:
    from .experiments import NonStatStudyConfig, nonstat_synthetic_study, synthetic_covariates
    from .figures import field_figure, score_comparison_figure

    cfg = NonStatStudyConfig(
        nx=args.grid_size, ny=args.grid_size, n_obs=args.n_obs,
        theta1_truth=tuple(args.theta1), theta2_truth=tuple(args.theta2),
        lambda_grid=tuple(args.lambda_grid), n_calibration=args.n_calibration,
    )
    config = McmcConfig(iters=args.iters, burn_in=args.burn_in)
    result = nonstat_synthetic_study(
        cfg, config, args.seed, n_workers=args.threads,
        drop_range_covariates=args.drop_range_covariates,
        drop_sd_covariates=args.drop_sd_covariates,
        selected_lambda=args.hyper_rate,
    )
    outdir = _outdir(args)
    outputs = []
    scores_path = outdir / "nonstat_scores.csv"
    with open(scores_path, "w", newline="") as fh:
        fh.write("model,log_score,crps_gaussian,crps_sample\n")
        for model in ("stationary", "nonstationary"):
            s = result["scores"][model]
            fh.write(f"{model},{s['log_score']!r},{s['crps_gaussian']!r},{s['crps_sample']!r}\n")
    outputs.append(scores_path)
    calib_path = outdir / "nonstat_calibration.csv"
    with open(calib_path, "w", newline="") as fh:
        fh.write("lambda,worst_coverage,coverages\n")
        for row in result["calibration_table"]:
            fh.write(f"{row['lambda']!r},{row['worst_coverage']!r},"
                     f"\"{json.dumps(row['coverages'])}\"\n")
    outputs.append(calib_path)

    grid = cfg.grid()
    chain = result["chains"]["nonstationary"]
    _, basis = synthetic_covariates(cfg)
    post = chain.post_burn_in()

    def field_mean(prefix, base_col, funcs):
        names = [n for n in chain.names if n.startswith(prefix)]
        base = np.exp(post[:, chain.names.index(base_col)]).mean()
        if not names:
            return np.full(grid.n_nodes, base)
        coef = post[:, [chain.names.index(n) for n in names]].mean(axis=0)
        return base * np.exp(funcs @ coef)

    range_field = field_mean("theta1", "log_rho", basis.functions)
    sd_field = field_mean("theta2", "log_sigma", basis.functions)
    for name, values in (("range_field", range_field), ("sd_field", sd_field)):
        path = outdir / f"{name}.csv"
        raster_to_csv(values, grid, path)
        outputs.append(path)
        if not args.no_figures:
            outputs.append(field_figure(values, grid, outdir / f"{name}.png", title=name))
    if not args.no_figures:
        outputs.append(score_comparison_figure(result["scores"], outdir / "nonstat_scores.png"))
    _write_manifest(args, "nonstat", outdir, outputs,
                    extra={"selected_lambda": result["selected_lambda"]})
    print(f"selected rate: {result['selected_lambda']:g}")
    for model in ("stationary", "nonstationary"):
        s = result["scores"][model]
        print(f"{model}: log_score={s['log_score']:.4f} crps={s['crps_gaussian']:.4f} "
              f"crps_sample={s['crps_sample']:.4f}")
    if args.check:
        better = (result["scores"]["nonstationary"]["crps_gaussian"]
                  < result["scores"]["stationary"]["crps_gaussian"])
        if not better:
            raise CheckFailure("non-stationary fit did not improve the CRPS")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pcgrf",
        description="Penalised-complexity priors for Matern Gaussian random fields.",
    )
    parser.add_argument("--version", action="version", version=f"pcgrf {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, seed_required=True):
        p.add_argument("--out", default="pcgrf-out", help="output directory")
        p.add_argument("--seed", type=int, required=seed_required,
                       help="master seed; all randomness derives from it")
        p.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                       help="worker count for replicate-parallel phases")
        p.add_argument("--no-figures", action="store_true", help="skip figure rendering")
        p.add_argument("--check", action="store_true",
                       help="exit 5 if a configured threshold is violated")

    p = sub.add_parser("calibrate", help="tail-probability calibration of the joint prior")
    p.add_argument("--rho0", type=float, required=True, help="lower range limit")
    p.add_argument("--alpha-rho", type=float, required=True, dest="alpha_rho",
                   help="probability that the range falls below rho0")
    p.add_argument("--sigma0", type=float, required=True, help="upper sd limit")
    p.add_argument("--alpha-sigma", type=float, required=True, dest="alpha_sigma",
                   help="probability that the sd exceeds sigma0")
    p.add_argument("--dim", type=int, default=2, choices=(1, 2, 3))
    p.add_argument("--out", default=None, help="optional output directory")
    p.set_defaults(func=cmd_calibrate, seed=0)

    p = sub.add_parser("density", help="evaluate a prior's log density at a point")
    p.add_argument("--prior", required=True,
                   help="pc | jeffreys | uniform | log-uniform, or a JSON spec/file")
    p.add_argument("--rho", type=float, required=True)
    p.add_argument("--sigma2", type=float, required=True)
    p.add_argument("--rho0", type=float, default=0.1)
    p.add_argument("--alpha-rho", type=float, default=0.05, dest="alpha_rho")
    p.add_argument("--sigma0", type=float, default=10.0)
    p.add_argument("--alpha-sigma", type=float, default=0.05, dest="alpha_sigma")
    p.add_argument("--dim", type=int, default=2, choices=(1, 2, 3))
    p.add_argument("--lower", type=float, default=None, help="range lower bound")
    p.add_argument("--upper", type=float, default=None, help="range upper bound")
    p.add_argument("--design", default=None, help="design CSV (design-dependent prior)")
    p.set_defaults(func=cmd_density)

    p = sub.add_parser("simulate", help="draw a field (or geostatistical) realization")
    add_common(p)
    p.add_argument("--design", default=None, help="design CSV; omit to sample one")
    p.add_argument("--n-locations", type=int, default=25, dest="n_locations")
    p.add_argument("--dim", type=int, default=2, choices=(1, 2, 3))
    p.add_argument("--rho", type=float, required=True)
    p.add_argument("--sigma2", type=float, required=True)
    p.add_argument("--nu", type=float, default=0.5)
    p.add_argument("--beta0", type=float, default=None, help="intercept (geostatistical model)")
    p.add_argument("--beta1", type=float, default=None, help="covariate coefficient")
    p.add_argument("--covariate", default=None, help="text file of per-location covariates")
    p.add_argument("--nugget-sd", type=float, default=0.0, dest="nugget_sd")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="posterior chain for a dataset under a chosen prior")
    add_common(p)
    p.add_argument("--data", required=True, help="realization CSV (coordinates + value)")
    p.add_argument("--prior", required=True)
    p.add_argument("--rho0", type=float, default=0.1)
    p.add_argument("--alpha-rho", type=float, default=0.05, dest="alpha_rho")
    p.add_argument("--sigma0", type=float, default=10.0)
    p.add_argument("--alpha-sigma", type=float, default=0.05, dest="alpha_sigma")
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--lower", type=float, default=None)
    p.add_argument("--upper", type=float, default=None)
    p.add_argument("--iters", type=int, default=30000)
    p.add_argument("--burn-in", type=int, default=10000, dest="burn_in")
    p.add_argument("--level", type=float, default=0.95)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("kld-check", help="verify the spectral-divergence construction")
    p.add_argument("--dim", type=int, default=2, choices=(1, 2, 3))
    p.add_argument("--alpha", type=float, default=2.0)
    p.add_argument("--box-sizes", type=float, nargs="+", default=[50.0, 100.0, 200.0],
                   dest="box_sizes")
    p.add_argument("--out", default=None)
    p.add_argument("--no-figures", action="store_true")
    p.add_argument("--check", action="store_true")
    p.set_defaults(func=cmd_kld_check, seed=0)

    p = sub.add_parser("coverage", help="frequentist coverage study, direct observation")
    add_common(p)
    p.add_argument("--priors", nargs="+", default=["pc"],
                   choices=["pc", "jeffreys", "uniform", "log-uniform", "self-calibration"])
    p.add_argument("--rho-t", type=float, default=0.1, dest="rho_t", help="true range")
    p.add_argument("--rows", type=float, nargs="+", default=[0.025, 0.1, 0.4, 1.6],
                   help="rho0 as multiples of the true range")
    p.add_argument("--absolute-rows", action="store_true", dest="absolute_rows",
                   help="read --rows as absolute rho0 values instead of multipliers")
    p.add_argument("--sigma0s", type=float, nargs="+", default=[40.0, 10.0, 2.5, 0.625])
    p.add_argument("--lowers", type=float, nargs="+", default=[5e-2, 5e-3, 5e-4])
    p.add_argument("--uppers", type=float, nargs="+", default=[2.0, 20.0, 200.0])
    p.add_argument("--replicates", type=int, default=200)
    p.add_argument("--iters", type=int, default=30000)
    p.add_argument("--burn-in", type=int, default=10000, dest="burn_in")
    p.add_argument("--design", default=None)
    p.add_argument("--design-seed", type=int, default=20250808, dest="design_seed")
    p.add_argument("--min-coverage", type=float, default=None, dest="min_coverage")
    p.set_defaults(func=cmd_coverage)

    p = sub.add_parser("ridge", help="joint posterior comparison on one realization")
    add_common(p)
    p.add_argument("--rho-t", type=float, default=1.0, dest="rho_t")
    p.add_argument("--rho0", type=float, default=0.1)
    p.add_argument("--sigma0", type=float, default=10.0)
    p.add_argument("--iters", type=int, default=60000)
    p.add_argument("--burn-in", type=int, default=15000, dest="burn_in")
    p.add_argument("--design", default=None)
    p.add_argument("--design-seed", type=int, default=20250808, dest="design_seed")
    p.set_defaults(func=cmd_ridge)

    p = sub.add_parser("logistic", help="coverage study with binomial observations")
    add_common(p)
    p.add_argument("--rho-t", type=float, default=0.1, dest="rho_t")
    p.add_argument("--rows", type=float, nargs="+", default=[0.1])
    p.add_argument("--absolute-rows", action="store_true", dest="absolute_rows")
    p.add_argument("--sigma0s", type=float, nargs="+", default=[10.0])
    p.add_argument("--replicates", type=int, default=100)
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--iters", type=int, default=12000)
    p.add_argument("--burn-in", type=int, default=4000, dest="burn_in")
    p.add_argument("--design", default=None)
    p.add_argument("--design-seed", type=int, default=20250808, dest="design_seed")
    p.set_defaults(func=cmd_logistic)

    p = sub.add_parser("nonstat", help="synthetic covariate-driven study: calibrate, fit, score")
    add_common(p)
    p.add_argument("--grid-size", type=int, default=50, dest="grid_size")
    p.add_argument("--n-obs", type=int, default=150, dest="n_obs")
    p.add_argument("--theta1", type=float, nargs=2, default=[0.0, 0.0],
                   help="true local-range coefficients")
    p.add_argument("--theta2", type=float, nargs=2, default=[0.0, 0.0],
                   help="true local-sd coefficients")
    p.add_argument("--lambda-grid", type=float, nargs="+",
                   default=[2.0, 5.0, 10.0, 20.0, 50.0, 100.0], dest="lambda_grid")
    p.add_argument("--n-calibration", type=int, default=100, dest="n_calibration")
    p.add_argument("--hyper-rate", type=float, default=None, dest="hyper_rate",
                   help="skip calibration and use this coefficient-precision rate")
    p.add_argument("--iters", type=int, default=4000)
    p.add_argument("--burn-in", type=int, default=1500, dest="burn_in")
    p.add_argument("--drop-range-covariates", action="store_true", dest="drop_range_covariates")
    p.add_argument("--drop-sd-covariates", action="store_true", dest="drop_sd_covariates")
    p.set_defaults(func=cmd_nonstat)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CheckFailure as exc:
        print(f"check failed: {exc}", file=sys.stderr)
        return EXIT_CHECK_FAILED
    except (ValueError, TypeError, FileNotFoundError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (FactorizationError, CalibrationError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
