"""Penalised-complexity priors for Matern Gaussian random fields.

Calibrated joint priors on range and marginal variance, exact field
simulation, MCMC posterior computation, frequentist-coverage studies of
competing priors, and a covariate-driven non-stationary extension with
coverage-calibrated shrinkage.
"""

__version__ = "0.1.0"

from .matern import (  # noqa: F401
    Design,
    FactorizationError,
    MaternParams,
    SpdeParams,
    cov_matrix,
    dcov_drho,
    from_spde,
    matern_cov,
    to_spde,
)
from .priors import (  # noqa: F401
    KappaTauHyper,
    PcHyper,
    PriorJeffreys,
    PriorLogUniformRange,
    PriorPC,
    PriorSpec,
    PriorUniformRange,
    bounded_uniform_logdensity,
    calibrate_pc,
    discrete_kld,
    jeffreys_rule_logdensity,
    kappa_tau_logdensity,
    pc_distance,
    pc_logdensity,
    prior_from_json,
    prior_to_json,
    scaled_kld,
)
from .grf import (  # noqa: F401
    GeoModel,
    Realization,
    gaussian_loglik,
    sample_geomodel,
    sample_grf,
)
from .mcmc import (  # noqa: F401
    Chain,
    Interval,
    McmcConfig,
    equal_tailed_ci,
    map_estimate,
    probit_gibbs,
    rw_metropolis,
)
from .nonstat import (  # noqa: F401
    BasisSet,
    Grid,
    NonStatModel,
    NonStatPriorSpec,
    build_precision,
    calibrate_by_coverage,
    crps_gaussian,
    gprior_logdensity,
    loo_scores,
    max_effect_calibration,
    nonstat_posterior,
    pc_precision_logdensity,
)
