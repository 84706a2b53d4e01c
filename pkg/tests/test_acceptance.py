"""Acceptance suite: every shipped guarantee at its stated tolerance.

Each criterion prints one PASS/FAIL line.  The coverage criteria run the
studies at desk scale (200 direct / 100 logistic replicates on a
regenerated 25-point design, seed 20250808) with the default chain
configuration; published-table targets carry the widened tolerances that
account for design regeneration.  Expect the full module to take tens of
minutes; run it with ``pytest tests/test_acceptance.py -s`` to watch the
lines appear.
"""

import math
import time

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.special import ndtr

from pcgrf.experiments import (
    NonStatStudyConfig,
    coverage_study,
    logistic_coverage_study,
    nonstat_synthetic_study,
    pc_row_hyper,
    ridge_study,
    self_calibration_study,
    simulate_nonstat_dataset,
)
from pcgrf.grf import sample_grf
from pcgrf.matern import Design, MaternParams, matern_cov, to_spde
from pcgrf.mcmc import McmcConfig, probit_gibbs, rw_metropolis
from pcgrf.nonstat import (
    BasisSet,
    Grid,
    GridWorkspace,
    NonStatModel,
    NonStatPriorSpec,
    build_precision,
    crps_gaussian,
    loo_scores,
    nonstat_posterior,
)
from pcgrf.priors import (
    KappaTauHyper,
    PriorJeffreys,
    PriorLogUniformRange,
    PriorPC,
    PriorUniformRange,
    calibrate_pc,
    discrete_kld,
    kappa_tau_logdensity,
    pc_logdensity,
    pc_range_logdensity,
    pc_sigma2_logdensity,
    scaled_kld,
)
from pcgrf.rng import substream

MASTER_SEED = 20250808
LEVEL = 0.95
DIRECT_REPLICATES = 200
LOGISTIC_REPLICATES = 100
CHAIN = McmcConfig(iters=30000, burn_in=10000)
GIBBS_CHAIN = McmcConfig(iters=12000, burn_in=4000)


def report(criterion: str, ok: bool, detail: str) -> bool:
    status = "PASS" if ok else "FAIL"
    print(f"ACCEPTANCE {criterion}: {status} ({detail})")
    return ok


@pytest.fixture(scope="module")
def design():
    return Design.random_uniform(25, 2, substream(MASTER_SEED, 0))


@pytest.fixture(scope="module")
def direct_cells(design):
    """All direct-observation coverage cells used by criteria 4, 5, 7, 10."""
    truth_short = MaternParams(rho=0.1, sigma2=1.0, nu=0.5, dim=2)
    truth_long = MaternParams(rho=1.0, sigma2=1.0, nu=0.5, dim=2)
    cells = {}
    cells["pc_short"] = coverage_study(
        PriorPC(pc_row_hyper(0.1, 0.1, 10.0)), truth_short, design,
        DIRECT_REPLICATES, CHAIN, seed=MASTER_SEED + 1,
    )
    cells["pc_long"] = coverage_study(
        PriorPC(pc_row_hyper(0.1, 1.0, 10.0)), truth_long, design,
        DIRECT_REPLICATES, CHAIN, seed=MASTER_SEED + 2,
    )
    cells["jeffreys_short"] = coverage_study(
        PriorJeffreys(), truth_short, design,
        DIRECT_REPLICATES, CHAIN, seed=MASTER_SEED + 3,
    )
    cells["pc_miscal"] = coverage_study(
        PriorPC(pc_row_hyper(1.6, 1.0, 40.0)), truth_long, design,
        DIRECT_REPLICATES, CHAIN, seed=MASTER_SEED + 4,
    )
    cells["un1_long"] = coverage_study(
        PriorUniformRange(5e-3, 200.0), truth_long, design,
        DIRECT_REPLICATES, CHAIN, seed=MASTER_SEED + 5,
    )
    cells["un2_short"] = coverage_study(
        PriorLogUniformRange(5e-3, 20.0), truth_short, design,
        DIRECT_REPLICATES, CHAIN, seed=MASTER_SEED + 6,
    )
    return cells


class TestCriterion1CalibrationIdentities:
    def test_quantile_identities_fast(self):
        rng = substream(MASTER_SEED, 10)
        t0 = time.time()
        worst = 0.0
        for _ in range(20):
            rho0 = float(10 ** rng.uniform(-1.5, 0.5))
            a_r = float(rng.uniform(0.02, 0.3))
            sigma0 = float(10 ** rng.uniform(-0.5, 1.5))
            a_s = float(rng.uniform(0.02, 0.3))
            dim = int(rng.integers(1, 4))
            hyper = calibrate_pc(rho0, a_r, sigma0, a_s, dim)
            p_r = quad(lambda r: math.exp(pc_range_logdensity(r, hyper)), 0, rho0,
                       epsrel=1e-12)[0]
            p_s = quad(lambda v: math.exp(pc_sigma2_logdensity(v, hyper)), sigma0**2,
                       np.inf, epsrel=1e-12)[0]
            worst = max(worst, abs(p_r - a_r), abs(p_s - a_s))
        elapsed = time.time() - t0
        ok = worst < 1e-8 and elapsed < 1.0
        assert report("1 calibration-identities", ok,
                      f"worst dev {worst:.2e}, {elapsed:.2f}s")


class TestCriterion2KldScaling:
    def test_power_law_closed_form_and_lattice_limit(self):
        t0 = time.time()
        worst = 0.0
        for dim in (1, 2, 3):
            alpha = 0.5 + dim / 2.0 + 0.75
            base = scaled_kld(1.0, alpha, dim)
            for kappa in (0.1, 0.5, 2.0, 10.0):
                ratio = scaled_kld(kappa, alpha, dim) / base
                worst = max(worst, abs(ratio - kappa**dim) / kappa**dim)
        closed = abs(scaled_kld(1.0, 2.0, 2) - 1.5 * math.pi) / (1.5 * math.pi)
        gaps = []
        for box in (50.0, 100.0, 200.0):
            kappa0 = 1.0 / box**2
            kmax = int(40.0 * box / (2.0 * math.pi)) + 1
            val = (2 * math.pi / box) ** 2 * discrete_kld(1.0, kappa0, 2.0, 2, box, kmax)
            gaps.append(abs(val - 1.5 * math.pi) / (1.5 * math.pi))
        elapsed = time.time() - t0
        ok = (worst < 1e-6 and closed < 1e-8 and gaps[0] > gaps[1] > gaps[2]
              and gaps[-1] < 0.02 and elapsed < 30.0)
        assert report("2 kld-scaling", ok,
                      f"power-law dev {worst:.1e}, closed-form dev {closed:.1e}, "
                      f"lattice gaps {['%.3f' % g for g in gaps]}, {elapsed:.1f}s")


class TestCriterion3ChangeOfVariables:
    def test_pushforward_matches_joint_density(self):
        nu, dim = 0.5, 2
        hyper = calibrate_pc(0.1, 0.05, 10.0, 0.05, dim)
        kt = KappaTauHyper.from_pc(hyper, nu)
        rng = substream(MASTER_SEED, 11)
        worst = 0.0
        for _ in range(100):
            rho = float(10 ** rng.uniform(-1.5, 1.5))
            s2 = float(10 ** rng.uniform(-1.5, 1.5))
            sp = to_spde(MaternParams(rho, s2, nu, dim))
            eps_r, eps_s = 1e-6 * rho, 1e-6 * s2
            sp_r = [to_spde(MaternParams(rho + e, s2, nu, dim)) for e in (eps_r, -eps_r)]
            sp_s = [to_spde(MaternParams(rho, s2 + e, nu, dim)) for e in (eps_s, -eps_s)]
            jac = abs(
                (sp_r[0].kappa - sp_r[1].kappa) / (2 * eps_r)
                * (sp_s[0].tau - sp_s[1].tau) / (2 * eps_s)
                - (sp_s[0].kappa - sp_s[1].kappa) / (2 * eps_s)
                * (sp_r[0].tau - sp_r[1].tau) / (2 * eps_r)
            )
            pushed = kappa_tau_logdensity(sp.kappa, sp.tau, kt, nu, dim) + math.log(jac)
            worst = max(worst, abs(pushed - float(pc_logdensity(rho, s2, hyper))))
        ok = worst < 1e-8
        assert report("3 change-of-variables", ok, f"worst |log diff| {worst:.2e}")


class TestCriterion4DirectCoverage:
    def test_pc_short_range_cell(self, direct_cells):
        cell = direct_cells["pc_short"]
        ok = abs(cell.coverage_range - 0.976) <= 0.05
        assert report("4a pc-cell rhoT=0.1", ok,
                      f"range coverage {cell.coverage_range:.3f} target 0.976±0.05 "
                      f"(length {cell.mean_ci_length_range:.3f})")

    def test_pc_long_range_cell(self, direct_cells):
        cell = direct_cells["pc_long"]
        ok = abs(cell.coverage_range - 0.966) <= 0.05
        assert report("4b pc-cell rhoT=1", ok,
                      f"range coverage {cell.coverage_range:.3f} target 0.966±0.05")

    def test_jeffreys_cell_coverage_and_lengths(self, direct_cells):
        cell = direct_cells["jeffreys_short"]
        ok_cov = (abs(cell.coverage_range - 0.970) <= 0.05
                  and abs(cell.coverage_variance - 0.960) <= 0.05)
        ok_len = (abs(cell.mean_ci_length_range - 0.86) <= 0.30 * 0.86
                  and abs(cell.mean_ci_length_variance - 2.7) <= 0.30 * 2.7)
        ok = ok_cov and ok_len
        assert report("4c jeffreys-cell rhoT=0.1", ok,
                      f"coverage {cell.coverage_range:.3f}/{cell.coverage_variance:.3f} "
                      f"targets 0.970/0.960±0.05; lengths "
                      f"{cell.mean_ci_length_range:.3f}/{cell.mean_ci_length_variance:.3f} "
                      f"targets 0.86/2.7±30%")

    def test_miscalibrated_row_degrades(self, direct_cells):
        cell = direct_cells["pc_miscal"]
        ok = cell.coverage_range < 0.5
        assert report("4d pc-miscalibrated rhoT=1", ok,
                      f"range coverage {cell.coverage_range:.3f} must be < 0.5 "
                      f"(published value 0.159)")


class TestCriterion5AppendixSpotCells:
    def test_uniform_prior_extreme_bound(self, direct_cells):
        cell = direct_cells["un1_long"]
        ok = abs(cell.coverage_range - 0.539) <= 0.08
        assert report("5a uniform-range cell", ok,
                      f"range coverage {cell.coverage_range:.3f} target 0.539±0.08")

    def test_log_uniform_prior_cell(self, direct_cells):
        cell = direct_cells["un2_short"]
        ok = abs(cell.coverage_range - 0.950) <= 0.05
        assert report("5b log-uniform cell", ok,
                      f"range coverage {cell.coverage_range:.3f} target 0.950±0.05")


class TestCriterion6Ridge:
    def test_tail_ordering_and_dependence(self, design):
        t0 = time.time()
        truth = MaternParams(rho=1.0, sigma2=1.0, nu=0.5, dim=2)
        real = sample_grf(design, truth, (MASTER_SEED, 20))
        hyper = calibrate_pc(0.1, 0.05, 10.0, 0.05, 2)
        out = ridge_study(
            real, hyper, McmcConfig(iters=60000, burn_in=15000, seed=(MASTER_SEED, 21))
        )
        s = out["summary"]
        elapsed = time.time() - t0
        ok = (s["jeffreys_sigma_upper_exceeds_pc"]
              and s["jeffreys"]["top_decile_correlation"] > 0.8
              and elapsed < 600.0)
        assert report("6 ridge", ok,
                      f"upper sigma jeffreys {s['jeffreys']['sigma_upper']:.3g} vs "
                      f"pc {s['pc']['sigma_upper']:.3g}; top-decile corr "
                      f"{s['jeffreys']['top_decile_correlation']:.3f}; {elapsed:.0f}s")


class TestCriterion7LogisticCoverage:
    def test_cell_and_length_ordering(self, design, direct_cells):
        truth = MaternParams(rho=0.1, sigma2=1.0, nu=0.5, dim=2)
        cell = logistic_coverage_study(
            pc_row_hyper(0.1, 0.1, 10.0), truth, design,
            LOGISTIC_REPLICATES, GIBBS_CHAIN, seed=MASTER_SEED + 7,
        )
        matched = direct_cells["pc_short"]
        ok_cov = abs(cell.coverage_range - 0.986) <= 0.06
        ok_len = cell.mean_ci_length_range > matched.mean_ci_length_range
        ok = ok_cov and ok_len
        assert report("7 logistic-coverage", ok,
                      f"range coverage {cell.coverage_range:.3f} target 0.986±0.06; "
                      f"length {cell.mean_ci_length_range:.3f} vs direct "
                      f"{matched.mean_ci_length_range:.3f} (must exceed)")


NONSTAT_GRID = Grid(0.0, 15.0, 0.0, 15.0, 40, 40)
RHO_STAT = math.sqrt(8.0)
NONSTAT_OBS = 150


@pytest.fixture(scope="module")
def calibrated():
    from pcgrf.nonstat import CalibrationError

    cfg = NonStatStudyConfig(nx=20, ny=20, n_obs=NONSTAT_OBS, sigma_n=0.25)
    study_chain = McmcConfig(iters=3000, burn_in=1000)
    try:
        result = nonstat_synthetic_study(
            cfg, study_chain, seed=MASTER_SEED + 8, n_workers=2
        )
    except CalibrationError as exc:
        # keep the diagnosis visible and let each criterion judge itself
        result = {
            "selected_lambda": None,
            "calibration_table": exc.table or [],
            "error": str(exc),
        }
    return cfg, result


class TestCriterion8NonStationary:
    def test_a_theta_zero_equals_stationary(self):
        empty = BasisSet(np.zeros((NONSTAT_GRID.n_nodes, 0)), NONSTAT_GRID)
        nodes = NONSTAT_GRID.nodes()
        r2 = ((nodes - np.array([5.0, 9.0])) ** 2).sum(axis=1)
        basis = BasisSet(
            np.column_stack([np.exp(-r2 / 18.0), np.sqrt(r2) * np.exp(-r2 / 18.0)]),
            NONSTAT_GRID,
        )
        params = MaternParams(rho=RHO_STAT, sigma2=1.0, nu=1.0, dim=2)
        q_zero = build_precision(
            NonStatModel(NONSTAT_GRID, basis, basis, np.zeros(2), np.zeros(2),
                         1.0, 1.0, params, 20.0, 20.0)
        )
        q_stat = build_precision(
            NonStatModel(NONSTAT_GRID, empty, empty, np.zeros(0), np.zeros(0),
                         1.0, 1.0, params, 20.0, 20.0)
        )
        diff = float(np.abs((q_zero - q_stat).toarray()).max())
        ok = diff < 1e-12
        assert report("8a theta-zero-precision", ok, f"max entry diff {diff:.2e}")

    def test_b_stationary_limit_marginal_variance(self):
        empty = BasisSet(np.zeros((NONSTAT_GRID.n_nodes, 0)), NONSTAT_GRID)
        params = MaternParams(rho=RHO_STAT, sigma2=1.0, nu=1.0, dim=2)
        q = build_precision(
            NonStatModel(NONSTAT_GRID, empty, empty, np.zeros(0), np.zeros(0),
                         1.0, 1.0, params, 20.0, 20.0)
        )
        cov = np.linalg.inv(q.toarray())
        interior = NONSTAT_GRID.interior_mask(2.0 * RHO_STAT)
        var = np.diag(cov)[interior]
        worst = float(np.abs(var - 1.0).max())
        idx = np.where(interior)[0]
        i = int(idx[len(idx) // 2])
        corr = cov[i, i + 1] / math.sqrt(cov[i, i] * cov[i + 1, i + 1])
        target = matern_cov(NONSTAT_GRID.h, params)
        ok = worst < 0.10 and abs(corr - target) < 0.05
        assert report("8b stationary-limit-variance", ok,
                      f"worst |var-1| {worst:.3f} (<0.10); lag-h corr dev "
                      f"{abs(corr - target):.3f} (<0.05)")

    def test_c_calibration_holds_on_resimulation(self, calibrated):
        from pcgrf.nonstat import calibrate_by_coverage

        cfg, result = calibrated
        lam = result["selected_lambda"]
        if lam is None:
            table = result.get("calibration_table", [])
            summary = ", ".join(
                f"{row['lambda']:g}:{row['worst_coverage']:.3f}" for row in table
            )
            assert report("8c coverage-calibration", False,
                          f"no candidate qualified; worst coverages {{{summary}}}")
        grid = cfg.grid()
        sites = result["data"]["sites"]
        from pcgrf.experiments import synthetic_covariates

        _, basis = synthetic_covariates(cfg)
        prior_template = NonStatPriorSpec(
            cfg.rho0, cfg.alpha_rho, cfg.sigma0, cfg.alpha_sigma,
            cfg.sigma_n0, cfg.alpha_sigma_n, lam, lam,
        )
        try:
            (_, _), table = calibrate_by_coverage(
                result["stationary_map"], sites, basis, basis, grid, prior_template,
                lambda_grid=(lam,), n_datasets=cfg.n_calibration,
                config=McmcConfig(iters=2000, burn_in=700, seed=(MASTER_SEED + 9, 6)),
                seed=MASTER_SEED + 9, n_workers=2, coverage_slack=0.02,
            )
            worst = table[-1]["worst_coverage"]
        except Exception as exc:  # keep the measured value for the report
            table = getattr(exc, "table", [])
            worst = table[-1]["worst_coverage"] if table else float("nan")
        ok = 0.93 <= worst <= 0.97
        assert report("8c coverage-calibration", ok,
                      f"selected rate {lam:g}; re-simulated worst-component "
                      f"coverage {worst:.3f} in [0.93, 0.97]")

    def test_d_nonstationary_generator_improves_crps(self, calibrated):
        cfg0, result = calibrated
        # if calibration produced no rate, test the property at the
        # mid-grid default so this criterion still gets its own verdict
        lam = result["selected_lambda"] or 20.0
        wins = 0
        details = []
        for rep in range(10):
            cfg = NonStatStudyConfig(
                nx=20, ny=20, n_obs=NONSTAT_OBS, sigma_n=0.25,
                theta1_truth=(0.5, -0.35), theta2_truth=(0.9, -0.5),
            )
            seed = MASTER_SEED + 100 + rep
            sites, x_cov, y, ws, basis = simulate_nonstat_dataset(cfg, seed)
            prior = NonStatPriorSpec(
                cfg.rho0, cfg.alpha_rho, cfg.sigma0, cfg.alpha_sigma,
                cfg.sigma_n0, cfg.alpha_sigma_n, lam, lam,
            )
            empty = np.zeros((cfg.grid().n_nodes, 0))
            ws_stat = GridWorkspace(cfg.grid(), empty, empty, sites)
            stat = nonstat_posterior(
                y, sites, x_cov, ws_stat, prior,
                McmcConfig(iters=4000, burn_in=1200, seed=(seed, 1)),
                store_predictive=True, predictive_thin=2,
            )
            ns = nonstat_posterior(
                y, sites, x_cov, ws, prior,
                McmcConfig(iters=4000, burn_in=1200, seed=(seed, 2)),
                store_predictive=True, predictive_thin=2,
            )
            s_stat = loo_scores(stat, y)["crps_gaussian"]
            s_ns = loo_scores(ns, y)["crps_gaussian"]
            wins += s_ns < s_stat
            details.append(f"{s_stat:.4f}>{s_ns:.4f}" if s_ns < s_stat
                           else f"{s_stat:.4f}<={s_ns:.4f}")
        ok = wins >= 8
        assert report("8d nonstat-improves-crps", ok,
                      f"{wins}/10 repetitions improved ({', '.join(details[:4])}, ...)")


class TestCriterion9SamplerCorrectness:
    def test_metropolis_moments(self):
        cfg = McmcConfig(iters=50000, burn_in=10000, seed=MASTER_SEED + 30)
        chain = rw_metropolis(lambda x: -0.5 * float(np.dot(x, x)), [1.0, -1.0], cfg)
        post = chain.post_burn_in()
        dev_mean = float(np.abs(post.mean(axis=0)).max())
        dev_var = float(np.abs(post.var(axis=0) - 1.0).max())
        ok = dev_mean < 0.03 and dev_var < 0.05
        assert report("9a metropolis-moments", ok,
                      f"|mean| {dev_mean:.4f} (<0.03), |var-1| {dev_var:.4f} (<0.05)")

    def test_probit_single_site_vs_quadrature(self):
        prior = PriorPC(calibrate_pc(0.1, 0.05, 10.0, 0.05, 2))
        design = Design([[0.5, 0.5]])
        cfg = McmcConfig(iters=12000, burn_in=4000, seed=MASTER_SEED + 31)
        chain = probit_gibbs([20], 20, design, prior, cfg)
        mean_p = float(ndtr(chain.extras["latent"][cfg.burn_in :, 0]).mean())
        ls_grid = np.linspace(-8.0, 6.0, 401)
        u_grid = np.linspace(-12.0, 12.0, 801)
        du, dl = u_grid[1] - u_grid[0], ls_grid[1] - ls_grid[0]
        p_vals = ndtr(u_grid)
        lik = p_vals**20
        num = den = 0.0
        for ls in ls_grid:
            s2 = math.exp(ls)
            w = math.exp(pc_sigma2_logdensity(s2, prior.hyper)) * s2
            gauss = np.exp(-0.5 * u_grid**2 / s2) / math.sqrt(2.0 * math.pi * s2)
            joint = gauss * lik * w
            den += joint.sum() * du * dl
            num += float((joint * p_vals).sum()) * du * dl
        oracle = num / den
        ok = abs(mean_p - oracle) < 0.02
        assert report("9b probit-vs-quadrature", ok,
                      f"posterior mean p {mean_p:.4f} vs oracle {oracle:.4f}")

    def test_crps_closed_form_vs_integral(self):
        closed = crps_gaussian(0.0, 1.0, 0.0)
        f = lambda x: (ndtr(x) - (x >= 0.0)) ** 2
        oracle = quad(f, -40, 0, epsrel=1e-13)[0] + quad(f, 0, 40, epsrel=1e-13)[0]
        dev = abs(closed - oracle)
        ok = dev < 1e-9 and abs(closed - 0.233695) < 1e-6
        assert report("9c crps-closed-form", ok,
                      f"closed {closed:.9f}, integral {oracle:.9f}, dev {dev:.1e}")


class TestCriterion10SelfCalibration:
    def test_prior_predictive_nominal_coverage(self, design):
        hyper = calibrate_pc(0.1, 0.05, 2.5, 0.05, 2)
        cell = self_calibration_study(
            hyper, design, DIRECT_REPLICATES, CHAIN, seed=MASTER_SEED + 40
        )
        slack = 3.0 * math.sqrt(LEVEL * (1 - LEVEL) / DIRECT_REPLICATES)
        dev = max(abs(cell.coverage_range - LEVEL), abs(cell.coverage_variance - LEVEL))
        ok = dev <= slack
        assert report("10 self-calibration", ok,
                      f"coverage {cell.coverage_range:.3f}/{cell.coverage_variance:.3f} "
                      f"vs nominal {LEVEL} within {slack:.3f}")
