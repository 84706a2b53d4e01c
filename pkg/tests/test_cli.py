"""End-to-end command-line tests: outputs, exit codes, reproducibility."""

import json

import pytest

from pcgrf.cli import main


def run(argv, capsys):
    code = main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestCalibrate:
    def test_prints_both_rates(self, capsys):
        code, out, _ = run(
            ["calibrate", "--rho0", "0.1", "--alpha-rho", "0.05",
             "--sigma0", "10", "--alpha-sigma", "0.05", "--dim", "2"],
            capsys,
        )
        assert code == 0
        assert "lambda_range = 0.299573" in out
        assert "lambda_sigma = 0.299573" in out

    def test_writes_prior_json(self, tmp_path, capsys):
        code, _, _ = run(
            ["calibrate", "--rho0", "0.2", "--alpha-rho", "0.1", "--sigma0", "2",
             "--alpha-sigma", "0.1", "--out", str(tmp_path)],
            capsys,
        )
        assert code == 0
        spec = json.loads((tmp_path / "pc_hyper.json").read_text())
        assert spec["type"] == "pc"
        assert spec["hyperparameters"]["rho0"] == 0.2


class TestDensity:
    def test_validation_exit_code_names_field(self, capsys):
        code, _, err = run(["density", "--prior", "pc", "--rho", "-1", "--sigma2", "1"], capsys)
        assert code == 3
        assert "rho" in err

    def test_evaluates_pc(self, capsys):
        code, out, _ = run(["density", "--prior", "pc", "--rho", "0.5", "--sigma2", "1"], capsys)
        assert code == 0
        assert "log_density" in out

    def test_jeffreys_needs_design(self, capsys):
        code, _, err = run(
            ["density", "--prior", "jeffreys", "--rho", "0.5", "--sigma2", "1"], capsys
        )
        assert code == 3
        assert "design" in err


class TestSimulateAndFit:
    def test_simulate_then_fit(self, tmp_path, capsys):
        out_dir = tmp_path / "sim"
        code, _, _ = run(
            ["simulate", "--seed", "5", "--rho", "0.3", "--sigma2", "1.0",
             "--n-locations", "12", "--out", str(out_dir), "--no-figures"],
            capsys,
        )
        assert code == 0
        data = out_dir / "realization.csv"
        assert data.exists()
        assert (out_dir / "realization.csv.manifest.json").exists()
        assert (out_dir / "simulate.manifest.json").exists()

        fit_dir = tmp_path / "fit"
        code, out, _ = run(
            ["fit", "--data", str(data), "--prior", "pc", "--rho0", "0.05",
             "--sigma0", "5", "--iters", "1500", "--burn-in", "500",
             "--seed", "6", "--out", str(fit_dir), "--no-figures"],
            capsys,
        )
        assert code == 0
        assert (fit_dir / "chain.csv").exists()
        assert "rho: ci=(" in out

    def test_simulate_reproducible_bytes(self, tmp_path, capsys):
        args = ["simulate", "--seed", "9", "--rho", "0.3", "--sigma2", "1.0",
                "--n-locations", "8", "--no-figures"]
        code, _, _ = run(args + ["--out", str(tmp_path / "a")], capsys)
        assert code == 0
        code, _, _ = run(args + ["--out", str(tmp_path / "b")], capsys)
        assert code == 0
        a = (tmp_path / "a" / "realization.csv").read_bytes()
        b = (tmp_path / "b" / "realization.csv").read_bytes()
        assert a == b


class TestKldCheck:
    def test_report_and_threshold(self, tmp_path, capsys):
        code, out, _ = run(
            ["kld-check", "--dim", "2", "--alpha", "2", "--box-sizes", "50", "100",
             "--out", str(tmp_path), "--no-figures", "--check"],
            capsys,
        )
        assert code == 0
        assert "max relative deviation" in out
        assert (tmp_path / "kld_check.csv").exists()

    def test_check_fails_on_coarse_box(self, capsys):
        code, _, err = run(
            ["kld-check", "--dim", "2", "--alpha", "2", "--box-sizes", "20", "--check"],
            capsys,
        )
        assert code == 5
        assert "check failed" in err


class TestStudies:
    def test_coverage_smoke_with_figures(self, tmp_path, capsys):
        code, out, _ = run(
            ["coverage", "--priors", "pc", "--rows", "0.4", "--sigma0s", "2.5",
             "--rho-t", "0.1", "--replicates", "6", "--iters", "800",
             "--burn-in", "300", "--seed", "11", "--out", str(tmp_path)],
            capsys,
        )
        assert code == 0
        assert (tmp_path / "coverage.csv").exists()
        assert (tmp_path / "coverage.png").exists()
        assert (tmp_path / "coverage.manifest.json").exists()
        assert "pc: range" in out

    def test_coverage_byte_identical_reruns(self, tmp_path, capsys):
        args = ["coverage", "--priors", "pc", "--rows", "0.4", "--sigma0s", "2.5",
                "--rho-t", "0.1", "--replicates", "4", "--iters", "600",
                "--burn-in", "200", "--seed", "12", "--no-figures"]
        run(args + ["--out", str(tmp_path / "a")], capsys)
        run(args + ["--out", str(tmp_path / "b")], capsys)
        assert (tmp_path / "a" / "coverage.csv").read_bytes() == (
            tmp_path / "b" / "coverage.csv"
        ).read_bytes()

    def test_ridge_smoke(self, tmp_path, capsys):
        code, out, _ = run(
            ["ridge", "--seed", "13", "--iters", "3000", "--burn-in", "1000",
             "--out", str(tmp_path)],
            capsys,
        )
        assert code == 0
        assert (tmp_path / "ridge_samples_pc.csv").exists()
        assert (tmp_path / "ridge_samples_jeffreys.csv").exists()
        assert (tmp_path / "ridge_summary.json").exists()
        assert (tmp_path / "ridge.png").exists()

    def test_logistic_smoke(self, tmp_path, capsys):
        code, _, _ = run(
            ["logistic", "--rows", "0.1", "--sigma0s", "10", "--replicates", "4",
             "--iters", "600", "--burn-in", "200", "--seed", "14",
             "--out", str(tmp_path), "--no-figures"],
            capsys,
        )
        assert code == 0
        assert (tmp_path / "logistic_coverage.csv").exists()

    def test_nonstat_smoke_fixed_rate(self, tmp_path, capsys):
        code, out, _ = run(
            ["nonstat", "--seed", "15", "--grid-size", "12", "--n-obs", "40",
             "--iters", "400", "--burn-in", "150", "--hyper-rate", "20",
             "--out", str(tmp_path), "--no-figures", "--threads", "1"],
            capsys,
        )
        assert code == 0
        assert (tmp_path / "nonstat_scores.csv").exists()
        assert (tmp_path / "range_field.csv").exists()
        assert "selected rate: 20" in out

    def test_env_var_overrides_outdir(self, tmp_path, capsys, monkeypatch):
        monkeypatch.setenv("PCGRF_OUT", str(tmp_path / "env"))
        code, _, _ = run(
            ["calibrate", "--rho0", "0.1", "--alpha-rho", "0.05", "--sigma0", "10",
             "--alpha-sigma", "0.05", "--out", str(tmp_path / "flag")],
            capsys,
        )
        assert code == 0
        assert (tmp_path / "env" / "pc_hyper.json").exists()
        assert not (tmp_path / "flag").exists()


class TestUsage:
    def test_missing_subcommand_is_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            main([])
        assert exc.value.code == 2

    def test_missing_seed_is_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            main(["simulate", "--rho", "0.3", "--sigma2", "1.0"])
        assert exc.value.code == 2
