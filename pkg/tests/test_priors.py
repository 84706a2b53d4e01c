"""Prior densities, calibration identities, and the divergence machinery.

Quadrature oracles (adaptive Gauss-Kronrod) back every derived value:
tail probabilities, normalization, the kappa-marginal, and the numerical
Jacobian for the change of variables between the two coordinate systems.
"""

import json
import math

import numpy as np
import pytest
from scipy.integrate import quad

from pcgrf.matern import Design, MaternParams, to_spde
from pcgrf.priors import (
    DivergenceError,
    KappaTauHyper,
    PriorJeffreys,
    PriorLogUniformRange,
    PriorPC,
    PriorUniformRange,
    bounded_uniform_logdensity,
    calibrate_pc,
    discrete_kld,
    jeffreys_rule_logdensity,
    kappa_logdensity,
    kappa_tau_logdensity,
    pc_distance,
    pc_logdensity,
    pc_range_logdensity,
    pc_sigma2_logdensity,
    prior_from_json,
    prior_to_json,
    sample_pc,
    scaled_kld,
)
from pcgrf.rng import substream


class TestCalibration:
    def test_range_rate_example(self):
        hyper = calibrate_pc(0.1, 0.05, 10.0, 0.05, 2)
        assert hyper.lambda_range == pytest.approx(-0.1 * math.log(0.05), rel=1e-12)
        assert hyper.lambda_range == pytest.approx(0.299573, abs=1e-6)

    def test_sigma_rate_follows_its_formula(self):
        hyper = calibrate_pc(0.1, 0.05, 10.0, 0.05, 2)
        assert hyper.lambda_sigma == pytest.approx(-math.log(0.05) / 10.0, rel=1e-12)

    def test_unit_rate_at_one_over_e(self):
        hyper = calibrate_pc(1.0, 1.0 / math.e, 1.0, 0.5, 2)
        assert hyper.lambda_range == pytest.approx(1.0, rel=1e-12)

    def test_domain_errors(self):
        with pytest.raises(ValueError):
            calibrate_pc(0.1, 0.0, 1.0, 0.05, 2)
        with pytest.raises(ValueError):
            calibrate_pc(-0.1, 0.05, 1.0, 0.05, 2)
        with pytest.raises(ValueError):
            calibrate_pc(0.1, 0.05, 1.0, 1.5, 2)


class TestJointDensity:
    def test_factorizes_exactly(self):
        hyper = calibrate_pc(0.2, 0.1, 4.0, 0.05, 2)
        rng = substream(21, 0)
        for _ in range(50):
            rho = float(10 ** rng.uniform(-1, 1))
            s2 = float(10 ** rng.uniform(-1, 1))
            joint = pc_logdensity(rho, s2, hyper)
            parts = pc_range_logdensity(rho, hyper) + pc_sigma2_logdensity(s2, hyper)
            assert joint == parts

    def test_quantile_identities_by_quadrature(self):
        rng = substream(21, 1)
        for _ in range(20):
            rho0 = float(10 ** rng.uniform(-1.5, 0.5))
            a_r = float(rng.uniform(0.02, 0.3))
            sigma0 = float(10 ** rng.uniform(-0.5, 1.5))
            a_s = float(rng.uniform(0.02, 0.3))
            dim = int(rng.integers(1, 4))
            hyper = calibrate_pc(rho0, a_r, sigma0, a_s, dim)
            p_r = quad(
                lambda r: math.exp(pc_range_logdensity(r, hyper)), 0.0, rho0, epsrel=1e-12
            )[0]
            p_s = quad(
                lambda v: math.exp(pc_sigma2_logdensity(v, hyper)),
                sigma0**2,
                np.inf,
                epsrel=1e-12,
            )[0]
            assert p_r == pytest.approx(a_r, abs=1e-8)
            assert p_s == pytest.approx(a_s, abs=1e-8)

    def test_normalization(self):
        hyper = calibrate_pc(0.1, 0.05, 10.0, 0.05, 2)
        n_r = quad(lambda r: math.exp(pc_range_logdensity(r, hyper)), 0, np.inf, limit=200)[0]
        n_s = quad(lambda v: math.exp(pc_sigma2_logdensity(v, hyper)), 0, np.inf, limit=200)[0]
        assert n_r * n_s == pytest.approx(1.0, abs=1e-6)

    def test_prior_sampler_matches_quantiles(self):
        hyper = calibrate_pc(0.1, 0.05, 10.0, 0.05, 2)
        rho, s2 = sample_pc(hyper, substream(21, 2), 200000)
        assert np.mean(rho < hyper.rho0) == pytest.approx(0.05, abs=0.003)
        assert np.mean(s2 > hyper.sigma0**2) == pytest.approx(0.05, abs=0.003)

    def test_domain_error(self):
        hyper = calibrate_pc(0.1, 0.05, 10.0, 0.05, 2)
        with pytest.raises(ValueError):
            pc_logdensity(-1.0, 1.0, hyper)


class TestKappaTauDensity:
    def test_change_of_variables_matches(self):
        nu, dim = 0.5, 2
        hyper = calibrate_pc(0.1, 0.05, 10.0, 0.05, dim)
        kt = KappaTauHyper.from_pc(hyper, nu)
        rng = substream(22, 0)
        for _ in range(100):
            rho = float(10 ** rng.uniform(-1.5, 1.5))
            s2 = float(10 ** rng.uniform(-1.5, 1.5))
            sp = to_spde(MaternParams(rho, s2, nu, dim))
            eps_r, eps_s = 1e-6 * rho, 1e-6 * s2
            sp_r = [to_spde(MaternParams(rho + e, s2, nu, dim)) for e in (eps_r, -eps_r)]
            sp_s = [to_spde(MaternParams(rho, s2 + e, nu, dim)) for e in (eps_s, -eps_s)]
            jac = np.array(
                [
                    [
                        (sp_r[0].kappa - sp_r[1].kappa) / (2 * eps_r),
                        (sp_s[0].kappa - sp_s[1].kappa) / (2 * eps_s),
                    ],
                    [
                        (sp_r[0].tau - sp_r[1].tau) / (2 * eps_r),
                        (sp_s[0].tau - sp_s[1].tau) / (2 * eps_s),
                    ],
                ]
            )
            pushed = kappa_tau_logdensity(sp.kappa, sp.tau, kt, nu, dim) + math.log(
                abs(np.linalg.det(jac))
            )
            assert pushed == pytest.approx(pc_logdensity(rho, s2, hyper), abs=1e-8)

    def test_kappa_marginal_by_quadrature(self):
        nu, dim = 0.5, 2
        kt = KappaTauHyper(lambda1=0.7, lambda3=1.3)
        for kappa in (0.3, 1.0, 4.0):
            marginal = quad(
                lambda t: math.exp(kappa_tau_logdensity(kappa, t, kt, nu, dim)),
                0.0,
                np.inf,
                limit=300,
            )[0]
            expected = math.exp(kappa_logdensity(kappa, kt.lambda1, dim))
            assert marginal == pytest.approx(expected, rel=1e-7)

    def test_vanishes_at_large_kappa(self):
        kt = KappaTauHyper(lambda1=1.0, lambda3=1.0)
        small = kappa_tau_logdensity(1e4, 1.0, kt, 0.5, 2)
        assert small < kappa_tau_logdensity(1.0, 1.0, kt, 0.5, 2) - 100.0

    def test_distance_pushforward_is_exponential(self):
        # P(kappa^{d/2} > t) under the kappa marginal equals exp(-lam1 t)
        lam1, dim = 0.8, 2
        for t in (0.2, 1.0, 3.0):
            tail = quad(
                lambda k: math.exp(kappa_logdensity(k, lam1, dim)),
                t ** (2.0 / dim),
                np.inf,
                limit=200,
            )[0]
            assert tail == pytest.approx(math.exp(-lam1 * t), abs=1e-8)


class TestJeffreysRule:
    def test_symbolic_two_point_formula(self):
        rng = substream(23, 0)
        for _ in range(100):
            h = float(rng.uniform(0.05, 2.0))
            rho = float(10 ** rng.uniform(-1, 1))
            sigma = float(10 ** rng.uniform(-1, 1))
            design = Design([[0.0, 0.0], [h, 0.0]])
            c = math.exp(-2.0 * h / rho)
            cp = (2.0 * h / rho**2) * c
            expected = -math.log(sigma) + math.log(math.sqrt(2.0) * cp / (1.0 - c * c))
            assert jeffreys_rule_logdensity(rho, sigma, design) == pytest.approx(
                expected, abs=1e-10
            )

    def test_sigma_enters_as_reciprocal(self):
        design = Design.random_uniform(10, 2, substream(23, 1))
        base = jeffreys_rule_logdensity(0.5, 1.0, design)
        assert jeffreys_rule_logdensity(0.5, 2.0, design) == pytest.approx(
            base - math.log(2.0), abs=1e-12
        )

    def test_finite_over_wide_range_span(self):
        design = Design.random_uniform(25, 2, substream(23, 2))
        for rho in (1e-3, 1e-2, 1.0, 1e2, 1e3):
            val = jeffreys_rule_logdensity(rho, 1.0, design)
            assert math.isfinite(val)


class TestBoundedUniform:
    def test_outside_bounds(self):
        spec = PriorUniformRange(0.05, 2.0)
        assert bounded_uniform_logdensity(3.0, 1.0, spec) == -math.inf
        assert bounded_uniform_logdensity(0.01, 1.0, spec) == -math.inf

    def test_flat_inside_for_uniform(self):
        spec = PriorUniformRange(0.05, 2.0)
        a = bounded_uniform_logdensity(0.1, 1.3, spec)
        b = bounded_uniform_logdensity(1.9, 1.3, spec)
        assert a == b

    def test_log_uniform_shift(self):
        spec = PriorLogUniformRange(0.05, 2.0)
        c = 3.0
        a = bounded_uniform_logdensity(0.2, 1.0, spec)
        b = bounded_uniform_logdensity(0.2 * c, 1.0, spec)
        assert a - b == pytest.approx(math.log(c), rel=1e-12)


class TestScaledKld:
    def test_closed_form_d2_alpha2(self):
        assert scaled_kld(1.0, 2.0, 2) == pytest.approx(1.5 * math.pi, rel=1e-8)

    def test_power_scaling_law(self):
        for dim in (1, 2, 3):
            for nu in (0.5, 1.0, 1.5):
                alpha = nu + dim / 2.0
                base = scaled_kld(1.0, alpha, dim)
                assert math.isfinite(base) and base > 0.0
                for kappa in (0.1, 0.5, 2.0, 10.0):
                    ratio = scaled_kld(kappa, alpha, dim) / base
                    assert ratio == pytest.approx(kappa**dim, rel=1e-6)

    def test_integrand_nonnegative(self):
        # x - 1 - log x >= 0 pointwise
        x = np.linspace(1e-6, 50.0, 2000)
        assert np.all(x - 1.0 - np.log(x) >= 0.0)

    def test_divergence_flagged(self):
        with pytest.raises(DivergenceError):
            scaled_kld(1.0, 0.9, 2)


class TestDiscreteKld:
    def test_zero_at_equal_parameters(self):
        assert discrete_kld(1.0, 1.0, 2.0, 2, 50.0, 60) == pytest.approx(0.0, abs=1e-14)

    def test_asymmetry(self):
        a = discrete_kld(1.0, 0.2, 2.0, 2, 30.0, 120)
        b = discrete_kld(0.2, 1.0, 2.0, 2, 30.0, 120)
        assert abs(a - b) > 1e-3

    def test_monotone_approach_to_continuum(self):
        target = 1.5 * math.pi
        gaps = []
        for box in (50.0, 100.0, 200.0):
            kappa0 = 1.0 / box**2
            kmax = int(40.0 * box / (2.0 * math.pi)) + 1
            val = (2.0 * math.pi / box) ** 2 * discrete_kld(1.0, kappa0, 2.0, 2, box, kmax)
            gaps.append(abs(val - target) / target)
        assert gaps[0] > gaps[1] > gaps[2]
        assert gaps[-1] < 0.02


class TestDistance:
    def test_base_model_and_units(self):
        assert pc_distance(0.0, 2) == 0.0
        assert pc_distance(4.0, 2) == pytest.approx(4.0)
        assert pc_distance(4.0, 1) == pytest.approx(2.0)

    def test_consistent_with_divergence(self):
        for kappa in (0.3, 2.0, 7.0):
            lhs = math.sqrt(2.0 * scaled_kld(kappa, 2.0, 2)) / math.sqrt(
                2.0 * scaled_kld(1.0, 2.0, 2)
            )
            assert lhs == pytest.approx(pc_distance(kappa, 2) / pc_distance(1.0, 2), rel=1e-6)


class TestSerialization:
    @pytest.mark.parametrize(
        "spec",
        [
            PriorPC(calibrate_pc(0.1, 0.05, 10.0, 0.05, 2)),
            PriorJeffreys(),
            PriorUniformRange(0.005, 200.0),
            PriorLogUniformRange(0.05, 2.0),
        ],
    )
    def test_json_round_trip(self, spec):
        text = json.dumps(prior_to_json(spec))
        back = prior_from_json(text)
        assert prior_to_json(back) == prior_to_json(spec)

    def test_unknown_type_rejected(self):
        with pytest.raises(ValueError):
            prior_from_json({"type": "cauchy", "hyperparameters": {}})
