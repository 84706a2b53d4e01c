"""Figure rendering smoke tests (files exist and are nonempty PNGs)."""

from pcgrf.experiments import CoverageCell, ridge_study
from pcgrf.figures import (
    coverage_figure,
    field_figure,
    kld_convergence_figure,
    realization_figure,
    ridge_figure,
    score_comparison_figure,
)
from pcgrf.grf import sample_grf
from pcgrf.matern import Design, MaternParams
from pcgrf.mcmc import McmcConfig
from pcgrf.nonstat import Grid
from pcgrf.priors import calibrate_pc
from pcgrf.rng import substream


def _check_png(path):
    data = path.read_bytes()
    assert data[:8] == b"\x89PNG\r\n\x1a\n"
    assert len(data) > 1000


def test_coverage_figure(tmp_path):
    cells = [
        CoverageCell(
            prior={"type": "pc", "hyperparameters": {"rho0": 0.01, "sigma0": 10.0}},
            truth={"rho": 0.1}, n_replicates=100, n_failed=0,
            coverage_range=0.97, coverage_variance=0.95,
            mean_ci_length_range=0.3, mean_ci_length_variance=1.4,
        ),
        CoverageCell(
            prior={"type": "jeffreys", "hyperparameters": {}},
            truth={"rho": 0.1}, n_replicates=100, n_failed=0,
            coverage_range=0.96, coverage_variance=0.94,
            mean_ci_length_range=0.9, mean_ci_length_variance=2.6,
        ),
    ]
    _check_png(coverage_figure(cells, tmp_path / "cov.png"))


def test_ridge_and_realization_figures(tmp_path):
    design = Design.random_uniform(20, 2, substream(70, 0))
    real = sample_grf(design, MaternParams(1.0, 1.0, 0.5, 2), (70, 1))
    out = ridge_study(real, calibrate_pc(0.1, 0.05, 10.0, 0.05, 2),
                      McmcConfig(iters=1500, burn_in=500, seed=(70, 2)))
    _check_png(ridge_figure(out, tmp_path / "ridge.png"))
    _check_png(realization_figure(real, tmp_path / "real.png"))


def test_field_kld_and_score_figures(tmp_path):
    grid = Grid(0.0, 10.0, 0.0, 10.0, 10, 10)
    values = substream(71, 0).standard_normal(grid.n_nodes)
    _check_png(field_figure(values, grid, tmp_path / "field.png", title="demo"))
    rows = [{"L": 50.0, "scaled": 4.85}, {"L": 100.0, "scaled": 4.75}]
    _check_png(kld_convergence_figure(rows, 4.712, tmp_path / "kld.png"))
    scores = {
        "stationary": {"log_score": 0.1, "crps_gaussian": 0.11, "crps_sample": 0.09},
        "nonstationary": {"log_score": 0.2, "crps_gaussian": 0.10, "crps_sample": 0.08},
    }
    _check_png(score_comparison_figure(scores, tmp_path / "scores.png"))
