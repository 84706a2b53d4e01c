"""Prior densities for the range and marginal variance of a Matern field.

The penalised-complexity (PC) construction shrinks the field towards a
base model along two directions: infinite range (the intrinsic limit)
and zero marginal variance.  The resulting joint density in the
(rho, sigma^2) coordinates is

    pi(rho, sigma^2) = [d lam_r / 2 * rho^(-1-d/2) exp(-lam_r rho^(-d/2))]
                       * [lam_s / 2 * sigma^(-1) exp(-lam_s sigma)],

with rates fixed by the two tail statements P(rho < rho0) = alpha_rho and
P(sigma^2 > sigma0^2) = alpha_sigma.  The same prior in the (kappa, tau)
coordinates, the design-dependent Jeffreys' rule prior, and the bounded
uniform / log-uniform alternatives used in the coverage studies live here
too, together with the numerical Kullback-Leibler machinery that backs
the kappa^(d/2) distance.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy.integrate import quad
from scipy.linalg import cho_factor, cho_solve

from .matern import Design, FactorizationError, spde_scale_const

# ---------------------------------------------------------------------------
# Hyperparameters and prior specifications
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PcHyper:
    """Tail-probability calibration of the PC prior.

    lambda_range and lambda_sigma are the derived exponential rates for
    the rho^(-d/2) distance and for sigma, respectively.
    """

    rho0: float
    alpha_rho: float
    sigma0: float
    alpha_sigma: float
    dim: int
    lambda_range: float
    lambda_sigma: float


def calibrate_pc(
    rho0: float, alpha_rho: float, sigma0: float, alpha_sigma: float, dim: int
) -> PcHyper:
    """Rates from P(rho < rho0) = alpha_rho and P(sigma > sigma0) = alpha_sigma."""
    if not (0.0 < alpha_rho < 1.0 and 0.0 < alpha_sigma < 1.0):
        raise ValueError("tail probabilities must lie strictly between 0 and 1")
    if not (rho0 > 0.0 and sigma0 > 0.0):
        raise ValueError("rho0 and sigma0 must be positive")
    if dim not in (1, 2, 3):
        raise ValueError(f"dim must be 1, 2 or 3, got {dim}")
    lambda_range = -(rho0 ** (dim / 2.0)) * math.log(alpha_rho)
    lambda_sigma = -math.log(alpha_sigma) / sigma0
    return PcHyper(rho0, alpha_rho, sigma0, alpha_sigma, dim, lambda_range, lambda_sigma)


@dataclass(frozen=True)
class KappaTauHyper:
    """Rates of the same prior in (kappa, tau) coordinates.

    lambda1 drives the exponential on the kappa^(d/2) distance; lambda3
    absorbs the kappa-dependence of the conditional tau rate, which
    equals lambda3 * kappa^(-nu).
    """

    lambda1: float
    lambda3: float

    def __post_init__(self) -> None:
        if not (self.lambda1 > 0.0 and self.lambda3 > 0.0):
            raise ValueError("rates must be positive")

    @classmethod
    def from_pc(cls, hyper: PcHyper, nu: float) -> "KappaTauHyper":
        lam1 = hyper.lambda_range * (8.0 * nu) ** (-hyper.dim / 4.0)
        lam3 = hyper.lambda_sigma * math.sqrt(spde_scale_const(nu, hyper.dim))
        return cls(lambda1=lam1, lambda3=lam3)


@dataclass(frozen=True)
class PriorPC:
    hyper: PcHyper


@dataclass(frozen=True)
class PriorJeffreys:
    """Design-dependent Jeffreys' rule prior; no hyperparameters."""


@dataclass(frozen=True)
class PriorUniformRange:
    """Uniform range on [lower, upper], scale-free sigma^(-1) on sigma."""

    lower: float
    upper: float

    def __post_init__(self) -> None:
        if not (0.0 < self.lower < self.upper):
            raise ValueError("bounds must be positive and ordered")


@dataclass(frozen=True)
class PriorLogUniformRange:
    """Log-uniform range on [lower, upper], sigma^(-1) on sigma."""

    lower: float
    upper: float

    def __post_init__(self) -> None:
        if not (0.0 < self.lower < self.upper):
            raise ValueError("bounds must be positive and ordered")


PriorSpec = Union[PriorPC, PriorJeffreys, PriorUniformRange, PriorLogUniformRange]

_PRIOR_TYPE_NAMES = {
    PriorPC: "pc",
    PriorJeffreys: "jeffreys",
    PriorUniformRange: "uniform",
    PriorLogUniformRange: "log_uniform",
}


def prior_to_json(spec: PriorSpec) -> dict:
    """Stable JSON form: {"type": ..., "hyperparameters": {...}}."""
    if isinstance(spec, PriorPC):
        h = spec.hyper
        params = {
            "rho0": h.rho0,
            "alpha_rho": h.alpha_rho,
            "sigma0": h.sigma0,
            "alpha_sigma": h.alpha_sigma,
            "dim": h.dim,
        }
    elif isinstance(spec, PriorJeffreys):
        params = {}
    elif isinstance(spec, (PriorUniformRange, PriorLogUniformRange)):
        params = {"lower": spec.lower, "upper": spec.upper}
    else:
        raise TypeError(f"unknown prior spec {spec!r}")
    return {"type": _PRIOR_TYPE_NAMES[type(spec)], "hyperparameters": params}


def prior_from_json(obj) -> PriorSpec:
    if isinstance(obj, str):
        obj = json.loads(obj)
    kind = obj.get("type")
    params = obj.get("hyperparameters", {})
    if kind == "pc":
        return PriorPC(calibrate_pc(**params))
    if kind == "jeffreys":
        return PriorJeffreys()
    if kind == "uniform":
        return PriorUniformRange(**params)
    if kind == "log_uniform":
        return PriorLogUniformRange(**params)
    raise ValueError(f"unknown prior type {kind!r}")


# ---------------------------------------------------------------------------
# Densities
# ---------------------------------------------------------------------------


def pc_logdensity(rho, sigma2, hyper: PcHyper, dim: int | None = None):
    """Log of the joint PC density in (rho, sigma^2); vectorized."""
    d = hyper.dim if dim is None else dim
    rho = np.asarray(rho, dtype=float)
    sigma2 = np.asarray(sigma2, dtype=float)
    if np.any(rho <= 0.0) or np.any(sigma2 <= 0.0):
        raise ValueError("rho and sigma2 must be positive")
    sigma = np.sqrt(sigma2)
    lr, ls = hyper.lambda_range, hyper.lambda_sigma
    part_rho = math.log(d * lr / 2.0) + (-1.0 - d / 2.0) * np.log(rho) - lr * rho ** (-d / 2.0)
    part_sigma = math.log(ls / 2.0) - np.log(sigma) - ls * sigma
    out = part_rho + part_sigma
    return float(out) if out.ndim == 0 else out


def pc_range_logdensity(rho, hyper: PcHyper):
    """Log of the rho marginal of the PC prior."""
    rho = np.asarray(rho, dtype=float)
    lr, d = hyper.lambda_range, hyper.dim
    out = math.log(d * lr / 2.0) + (-1.0 - d / 2.0) * np.log(rho) - lr * rho ** (-d / 2.0)
    return float(out) if out.ndim == 0 else out


def pc_sigma2_logdensity(sigma2, hyper: PcHyper):
    """Log of the sigma^2 marginal of the PC prior."""
    sigma = np.sqrt(np.asarray(sigma2, dtype=float))
    ls = hyper.lambda_sigma
    out = math.log(ls / 2.0) - np.log(sigma) - ls * sigma
    return float(out) if out.ndim == 0 else out


def sample_pc(hyper: PcHyper, rng: np.random.Generator, size: int):
    """Draws (rho, sigma2) from the PC prior by inverse CDF."""
    e1 = rng.exponential(1.0, size=size)  # lam_r * rho^(-d/2)
    rho = (hyper.lambda_range / e1) ** (2.0 / hyper.dim)
    sigma = rng.exponential(1.0 / hyper.lambda_sigma, size=size)
    return rho, sigma**2


def kappa_tau_logdensity(kappa, tau, hyper: KappaTauHyper, nu: float, dim: int):
    """Log joint density of (kappa, tau) for the same prior."""
    kappa = np.asarray(kappa, dtype=float)
    tau = np.asarray(tau, dtype=float)
    if np.any(kappa <= 0.0) or np.any(tau <= 0.0):
        raise ValueError("kappa and tau must be positive")
    l1, l3 = hyper.lambda1, hyper.lambda3
    out = (
        math.log(l1 * l3 * dim / 4.0)
        - 1.5 * np.log(tau)
        + (dim / 2.0 - 1.0 - nu) * np.log(kappa)
        - l1 * kappa ** (dim / 2.0)
        - l3 * kappa ** (-nu) / np.sqrt(tau)
    )
    return float(out) if out.ndim == 0 else out


def kappa_logdensity(kappa, lambda1: float, dim: int):
    """Log density of the kappa marginal (exponential on the distance)."""
    kappa = np.asarray(kappa, dtype=float)
    out = (
        math.log(lambda1 * dim / 2.0)
        + (dim / 2.0 - 1.0) * np.log(kappa)
        - lambda1 * kappa ** (dim / 2.0)
    )
    return float(out) if out.ndim == 0 else out


def jeffreys_rule_logdensity(rho: float, sigma: float, design: Design) -> float:
    """Unnormalized log density sigma^(-1) (tr(U^2) - tr(U)^2/n)^(1/2).

    U = (d Sigma / d rho) Sigma^(-1) with Sigma the unit-diagonal
    exponential correlation matrix of the design.  Cost is O(n^3).
    """
    if not (rho > 0.0 and sigma > 0.0):
        raise ValueError("rho and sigma must be positive")
    n = design.n
    if n < 2:
        raise ValueError("need at least 2 locations")
    d = design.distances
    corr = np.exp(-2.0 * d / rho)
    dcorr = (2.0 * d / rho**2) * corr
    try:
        factor = cho_factor(corr, lower=True)
    except np.linalg.LinAlgError as exc:
        raise FactorizationError(f"correlation matrix not factorizable at rho={rho}") from exc
    u = cho_solve(factor, dcorr).T  # (dSigma) Sigma^{-1}
    tr_u = np.trace(u)
    tr_u2 = float(np.sum(u * u.T))
    inner = tr_u2 - tr_u**2 / n
    if inner <= 0.0:
        # exact zero only for a derivative-free design; clamp guards round-off
        inner = max(inner, 1e-300)
    return -math.log(sigma) + 0.5 * math.log(inner)


def bounded_uniform_logdensity(rho, sigma, spec: PriorUniformRange | PriorLogUniformRange):
    """Unnormalized log density of the bounded uniform variants (in (rho, sigma))."""
    rho = np.asarray(rho, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    out = -np.log(sigma)
    if isinstance(spec, PriorLogUniformRange):
        out = out - np.log(rho)
    elif not isinstance(spec, PriorUniformRange):
        raise TypeError(f"expected a bounded uniform spec, got {spec!r}")
    out = np.where((rho >= spec.lower) & (rho <= spec.upper), out, -np.inf)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# Kullback-Leibler distance machinery
# ---------------------------------------------------------------------------


def pc_distance(kappa, dim: int):
    """Distance kappa^(d/2) from the intrinsic base model (unit constant)."""
    kappa = np.asarray(kappa, dtype=float)
    if np.any(kappa < 0.0):
        raise ValueError("kappa must be nonnegative")
    out = kappa ** (dim / 2.0)
    return float(out) if out.ndim == 0 else out


class DivergenceError(ValueError):
    """The spectral divergence integral does not converge."""


def scaled_kld(kappa: float, alpha: float, dim: int) -> float:
    """Scaled divergence from the intrinsic limit, 0.5 * int [g - 1 - log g] dw.

    g(w) = (|w|^2 / (kappa^2 + |w|^2))^alpha; the integral is evaluated in
    radial form with splits at kappa and 10 kappa where the integrand
    changes regime.  Finite only for alpha > d/2 and d <= 3.
    """
    if kappa <= 0.0:
        raise ValueError("kappa must be positive")
    if dim not in (1, 2, 3):
        raise ValueError("dim must be 1, 2 or 3")
    if alpha <= dim / 2.0:
        raise DivergenceError(f"integral diverges for alpha={alpha} <= d/2={dim / 2}")

    sphere = 2.0 * math.pi ** (dim / 2.0) / math.gamma(dim / 2.0)
    k2 = kappa * kappa

    def integrand(r: float) -> float:
        log_g = alpha * (math.log(r * r) - math.log(k2 + r * r))
        if log_g > -1e-4:
            # series for exp(u) - 1 - u; avoids cancellation in the far tail
            bracket = log_g * log_g * (0.5 + log_g * (1.0 / 6.0 + log_g / 24.0))
        else:
            bracket = math.exp(log_g) - 1.0 - log_g
        return bracket * r ** (dim - 1)

    total = 0.0
    scale = kappa**dim
    pieces = [(0.0, kappa), (kappa, 10.0 * kappa), (10.0 * kappa, math.inf)]
    for a, b in pieces:
        val, _ = quad(integrand, a, b, epsabs=1e-13 * scale, epsrel=1e-10, limit=200)
        total += val
    return 0.5 * sphere * total


def discrete_kld(
    kappa: float, kappa0: float, alpha: float, dim: int, L: float, kmax: int
) -> float:
    """Divergence between periodic-box fields with inverse ranges kappa0, kappa.

    Truncated lattice sum over k in Z^d of [r_k - 1 - log r_k] with the
    spectral ratio r_k = (kappa0^2 + |2 pi k / L|^2)^alpha
    / (kappa^2 + |2 pi k / L|^2)^alpha; the overall eigenvalue scale
    cancels in the ratio.  Scaling the sum by (2 pi / L)^d recovers
    ``scaled_kld`` in the joint limit kappa0 -> 0, L -> infinity with
    L = o(1/kappa0).
    """
    if kappa <= 0.0 or kappa0 <= 0.0:
        raise ValueError("kappa and kappa0 must be positive")
    step = 2.0 * math.pi / L
    axis = step * np.arange(-kmax, kmax + 1, dtype=float)
    axis_sq = axis * axis

    total = 0.0
    if dim == 1:
        w2 = axis_sq
        ratio_log = alpha * (np.log(kappa0**2 + w2) - np.log(kappa**2 + w2))
        total = float(np.sum(np.exp(ratio_log) - 1.0 - ratio_log))
    elif dim == 2:
        for chunk in np.array_split(axis_sq, max(1, len(axis_sq) // 256)):
            w2 = chunk[:, None] + axis_sq[None, :]
            ratio_log = alpha * (np.log(kappa0**2 + w2) - np.log(kappa**2 + w2))
            total += float(np.sum(np.exp(ratio_log) - 1.0 - ratio_log))
    else:
        plane = axis_sq[:, None] + axis_sq[None, :]
        for a2 in axis_sq:
            w2 = plane + a2
            ratio_log = alpha * (np.log(kappa0**2 + w2) - np.log(kappa**2 + w2))
            total += float(np.sum(np.exp(ratio_log) - 1.0 - ratio_log))
    return 0.5 * total
