"""Posterior computation: adaptive random-walk Metropolis, credible
intervals, derivative-free MAP search, and a probit data-augmentation
Gibbs sampler for binomial observations of a latent field.

All positive parameters are sampled on the log scale (Jacobians included
by the callers that build the log posteriors), which removes the boundary
and makes Gaussian proposals sensible along the range/variance ridge.
Proposal covariance and scale adapt during burn-in only and are frozen
afterwards, so the retained part of the chain is a valid Markov chain.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import minimize
from scipy.special import ndtr, ndtri

from .matern import Design
from .priors import PriorPC, pc_logdensity
from .rng import substream


@dataclass(frozen=True)
class McmcConfig:
    iters: int = 30000
    burn_in: int = 10000
    target_accept: float = 0.30
    seed: int | tuple[int, ...] = 0

    def __post_init__(self) -> None:
        if not 0 <= self.burn_in < self.iters:
            raise ValueError("need 0 <= burn_in < iters")

    def seed_path(self) -> tuple[int, ...]:
        return (self.seed,) if isinstance(self.seed, int) else tuple(self.seed)


@dataclass
class Chain:
    """Sampled parameter matrix (iterations x parameters) with metadata."""

    samples: np.ndarray
    names: list[str]
    burn_in: int
    acceptance_rate: float
    seed: tuple[int, ...]
    warnings: list[str] = field(default_factory=list)
    extras: dict = field(default_factory=dict)

    def post_burn_in(self) -> np.ndarray:
        return self.samples[self.burn_in :]

    def column(self, name: str, after_burn_in: bool = True) -> np.ndarray:
        data = self.post_burn_in() if after_burn_in else self.samples
        return data[:, self.names.index(name)]


@dataclass(frozen=True)
class Interval:
    lower: float
    upper: float
    level: float

    def __post_init__(self) -> None:
        if self.lower > self.upper:
            raise ValueError("interval endpoints out of order")

    def contains(self, value: float) -> bool:
        return self.lower <= value <= self.upper

    @property
    def length(self) -> float:
        return self.upper - self.lower


def equal_tailed_ci(samples, level: float) -> Interval:
    """Empirical equal-tailed interval with linear order-statistic interpolation."""
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 1 or len(samples) < 100:
        raise ValueError("need at least 100 post-burn-in samples")
    if not 0.0 < level <= 1.0:
        raise ValueError("level must lie in (0, 1]")
    if level == 1.0:
        return Interval(float(samples.min()), float(samples.max()), level)
    tail = (1.0 - level) / 2.0
    lo, hi = np.quantile(samples, [tail, 1.0 - tail])
    return Interval(float(lo), float(hi), level)


# ---------------------------------------------------------------------------
# Adaptive random-walk Metropolis
# ---------------------------------------------------------------------------


class _Adaptation:
    """Robbins-Monro scale plus running covariance, shared by all samplers."""

    def __init__(self, n_chains: int, n_params: int, target: float) -> None:
        self.target = target
        self.log_scale = np.full(n_chains, math.log(2.38 / math.sqrt(n_params)))
        self.mean = np.zeros((n_chains, n_params))
        self.cov = np.tile(np.eye(n_params), (n_chains, 1, 1))
        self.count = 0
        self.chol = None
        self._refresh()

    def _refresh(self) -> None:
        reg = self.cov + 1e-10 * np.eye(self.cov.shape[-1])
        scale = np.exp(self.log_scale)[:, None, None]
        self.chol = np.linalg.cholesky(reg) * scale

    def update(self, state: np.ndarray, accept_prob: np.ndarray) -> None:
        self.count += 1
        t = self.count
        gamma = t ** (-0.6)
        self.log_scale += gamma * (accept_prob - self.target)
        delta = state - self.mean
        self.mean += delta / (t + 1)
        self.cov += gamma * (delta[:, :, None] * delta[:, None, :] - self.cov)
        self._refresh()


def rw_metropolis(logpost, init, config: McmcConfig, names: list[str] | None = None) -> Chain:
    """Adaptive Gaussian random-walk Metropolis for a single chain."""
    init = np.atleast_1d(np.asarray(init, dtype=float))
    lp0 = float(logpost(init))
    if not np.isfinite(lp0):
        raise ValueError("log posterior must be finite at the initial point")

    def batch_logpost(states: np.ndarray) -> np.ndarray:
        return np.array([logpost(s) for s in states])

    samples, rate, warn = _rw_core(batch_logpost, init[None, :], config)
    if names is None:
        names = [f"param_{i}" for i in range(init.size)]
    return Chain(
        samples=samples[0],
        names=names,
        burn_in=config.burn_in,
        acceptance_rate=float(rate[0]),
        seed=config.seed_path(),
        warnings=warn,
    )


def rw_metropolis_batch(batch_logpost, inits: np.ndarray, config: McmcConfig):
    """Lockstep adaptive Metropolis across independent chains.

    ``batch_logpost`` maps an (m, p) state matrix to an (m,) vector.  Each
    chain carries its own adapted scale and covariance; chains interact
    only through the shared (deterministic) random stream.
    """
    return _rw_core(batch_logpost, np.asarray(inits, dtype=float), config)


def _rw_core(batch_logpost, inits: np.ndarray, config: McmcConfig):
    m, p = inits.shape
    rng = substream(*config.seed_path())
    state = inits.copy()
    lp = np.asarray(batch_logpost(state), dtype=float)
    if not np.all(np.isfinite(lp)):
        raise ValueError("log posterior must be finite at every initial point")

    adapt = _Adaptation(m, p, config.target_accept)
    samples = np.empty((m, config.iters, p))
    accepted = np.zeros(m)
    burn_accepted = np.zeros(m)

    for t in range(config.iters):
        eps = rng.standard_normal((m, p))
        proposal = state + np.einsum("mij,mj->mi", adapt.chol, eps)
        lp_new = np.asarray(batch_logpost(proposal), dtype=float)
        with np.errstate(over="ignore"):
            accept_prob = np.exp(np.minimum(0.0, lp_new - lp))
        accept_prob[~np.isfinite(lp_new)] = 0.0
        take = rng.random(m) < accept_prob
        state[take] = proposal[take]
        lp[take] = lp_new[take]
        if t < config.burn_in:
            adapt.update(state, accept_prob)
            burn_accepted += take
        else:
            accepted += take
        samples[:, t, :] = state

    kept = config.iters - config.burn_in
    warnings = []
    if config.burn_in > 0 and np.any(burn_accepted == 0):
        warnings.append("no proposals accepted during the adaptation window")
    return samples, accepted / kept, warnings


def map_estimate(logpost, init, xatol: float = 1e-6, maxfev: int = 2000):
    """Simplex (Nelder-Mead) maximizer; returns (point, converged_flag)."""
    init = np.atleast_1d(np.asarray(init, dtype=float))
    if not np.isfinite(logpost(init)):
        raise ValueError("log posterior must be finite at the initial point")
    res = minimize(
        lambda x: -logpost(x),
        init,
        method="Nelder-Mead",
        options={"xatol": xatol, "fatol": 1e-12, "maxfev": maxfev},
    )
    return np.atleast_1d(res.x), bool(res.success)


# ---------------------------------------------------------------------------
# Probit data augmentation for binomial counts of a latent field
# ---------------------------------------------------------------------------


def _truncnorm_signed(mean: np.ndarray, positive: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Draws from N(mean, 1) truncated to (0, inf) where positive, else (-inf, 0]."""
    lo_mass = ndtr(-mean)  # P(z <= 0)
    q = np.where(positive, lo_mass + u * (1.0 - lo_mass), u * lo_mass)
    q = np.clip(q, 1e-300, 1.0 - 1e-16)
    return mean + ndtri(q)


def probit_gibbs(
    counts,
    trials: int,
    design: Design,
    prior: PriorPC,
    config: McmcConfig,
    init_log_rho: float | None = None,
    init_log_sigma2: float = 0.0,
    store_latent: bool = True,
) -> Chain:
    """Gibbs sampler for y_i ~ Binomial(trials, Phi(u_i)), u a latent field.

    Each binomial count is expanded into ``trials`` Bernoulli indicators
    whose latent normals are drawn from truncated normals; the field u is
    then conjugate Gaussian, and (rho, sigma^2) move by an adaptive
    Metropolis step on the Gaussian evidence of u under the prior.
    """
    counts = np.asarray(counts, dtype=int)
    if np.any(counts < 0) or np.any(counts > trials):
        raise ValueError("counts must lie in [0, trials]")
    hypers, us, rate, warn = _probit_gibbs_core(
        counts[None, :], trials, design, prior, config, init_log_rho, init_log_sigma2,
        store_latent=store_latent,
    )
    extras = {"latent": us[0]} if store_latent else {}
    return Chain(
        samples=hypers[0],
        names=["log_rho", "log_sigma2"],
        burn_in=config.burn_in,
        acceptance_rate=float(rate[0]),
        seed=config.seed_path(),
        warnings=warn,
        extras=extras,
    )


def probit_gibbs_batch(counts: np.ndarray, trials, design, prior, config, **kwargs):
    hypers, _, rate, warn = _probit_gibbs_core(
        np.asarray(counts, dtype=int), trials, design, prior, config, store_latent=False, **kwargs
    )
    return hypers, rate, warn


def _gaussian_evidence_batch(u: np.ndarray, dist: np.ndarray, log_rho, log_sigma2):
    """log N(u; 0, sigma^2 R(rho)) for each replicate; -inf where not factorizable."""
    m, n = u.shape
    rho = np.exp(log_rho)
    corr = np.exp(-2.0 * dist[None, :, :] / rho[:, None, None])
    out = np.full(m, -np.inf)
    try:
        chol = np.linalg.cholesky(corr)
        ok = np.ones(m, dtype=bool)
    except np.linalg.LinAlgError:
        chol = np.empty_like(corr)
        ok = np.zeros(m, dtype=bool)
        for i in range(m):
            try:
                chol[i] = np.linalg.cholesky(corr[i])
                ok[i] = True
            except np.linalg.LinAlgError:
                pass
    if not np.any(ok):
        return out
    logdet_r = 2.0 * np.sum(np.log(np.diagonal(chol[ok], axis1=1, axis2=2)), axis=1)
    sol = np.linalg.solve(corr[ok], u[ok][:, :, None])[:, :, 0]
    quad = np.einsum("mi,mi->m", u[ok], sol)
    s2 = np.exp(log_sigma2[ok])
    out[ok] = -0.5 * (n * math.log(2.0 * math.pi) + n * log_sigma2[ok] + logdet_r + quad / s2)
    return out


def _probit_gibbs_core(
    counts: np.ndarray,
    trials: int,
    design: Design,
    prior: PriorPC,
    config: McmcConfig,
    init_log_rho: float | None = None,
    init_log_sigma2: float = 0.0,
    store_latent: bool = False,
):
    if not isinstance(prior, PriorPC):
        raise TypeError("the probit sampler is calibrated for the PC prior")
    m, n = counts.shape
    dist = design.distances
    rng = substream(*config.seed_path())

    if init_log_rho is None:
        init_log_rho = math.log(prior.hyper.rho0 * 4.0)
    theta = np.tile([init_log_rho, init_log_sigma2], (m, 1))
    u = np.zeros((m, n))
    positive = np.arange(trials)[None, None, :] < counts[:, :, None]  # (m, n, trials)

    adapt = _Adaptation(m, 2, config.target_accept)
    hypers = np.empty((m, config.iters, 2))
    us = np.empty((1, config.iters, n)) if store_latent else None
    accepted = np.zeros(m)
    burn_accepted = np.zeros(m)
    lp_field = _gaussian_evidence_batch(u, dist, theta[:, 0], theta[:, 1])
    eye = np.eye(n)

    def log_prior(th):
        return pc_logdensity(np.exp(th[:, 0]), np.exp(th[:, 1]), prior.hyper) + th[:, 0] + th[:, 1]

    lp_hyper = log_prior(theta)

    for t in range(config.iters):
        # latent Bernoulli normals
        z = _truncnorm_signed(
            np.broadcast_to(u[:, :, None], (m, n, trials)),
            positive,
            rng.random((m, n, trials)),
        )
        s = z.sum(axis=2)

        # field u | z, rho, sigma2  (precision Sigma^{-1} + trials * I)
        rho = np.exp(theta[:, 0])
        s2 = np.exp(theta[:, 1])
        sigma = s2[:, None, None] * np.exp(-2.0 * dist[None, :, :] / rho[:, None, None])
        # Q^{-1} = Sigma - Sigma (Sigma + I/trials)^{-1} Sigma  (Woodbury)
        inner = sigma + eye[None, :, :] / trials
        sol = np.linalg.solve(inner, sigma)
        cov_u = sigma - sigma @ sol
        cov_u = 0.5 * (cov_u + cov_u.transpose(0, 2, 1)) + 1e-12 * eye[None, :, :]
        mean_u = np.einsum("mij,mj->mi", cov_u, s)
        chol_u = np.linalg.cholesky(cov_u)
        u = mean_u + np.einsum("mij,mj->mi", chol_u, rng.standard_normal((m, n)))
        lp_field = _gaussian_evidence_batch(u, dist, theta[:, 0], theta[:, 1])

        # (rho, sigma2) | u by adaptive Metropolis on the Gaussian evidence
        eps = rng.standard_normal((m, 2))
        proposal = theta + np.einsum("mij,mj->mi", adapt.chol, eps)
        lp_field_new = _gaussian_evidence_batch(u, dist, proposal[:, 0], proposal[:, 1])
        lp_hyper_new = log_prior(proposal)
        with np.errstate(over="ignore", invalid="ignore"):
            accept_prob = np.exp(
                np.minimum(0.0, lp_field_new + lp_hyper_new - lp_field - lp_hyper)
            )
        accept_prob[~np.isfinite(lp_field_new + lp_hyper_new)] = 0.0
        take = rng.random(m) < accept_prob
        theta[take] = proposal[take]
        lp_field[take] = lp_field_new[take]
        lp_hyper = log_prior(theta)
        if t < config.burn_in:
            adapt.update(theta, accept_prob)
            burn_accepted += take
        else:
            accepted += take
        hypers[:, t, :] = theta
        if store_latent:
            us[0, t, :] = u[0]

    warnings = []
    if config.burn_in > 0 and np.any(burn_accepted == 0):
        warnings.append("no proposals accepted during the adaptation window")
    kept = config.iters - config.burn_in
    return hypers, us, accepted / kept, warnings


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------


def chain_to_csv(chain: Chain, path, config: McmcConfig | None = None) -> None:
    """Samples as CSV with named columns; config/seed/rate in a JSON manifest."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(chain.names)
        for row in chain.samples:
            writer.writerow([repr(float(v)) for v in row])
    manifest = {
        "burn_in": chain.burn_in,
        "acceptance_rate": chain.acceptance_rate,
        "seed": list(chain.seed),
        "warnings": chain.warnings,
    }
    if config is not None:
        manifest["config"] = {
            "iters": config.iters,
            "burn_in": config.burn_in,
            "target_accept": config.target_accept,
        }
    path.with_suffix(path.suffix + ".manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    )
