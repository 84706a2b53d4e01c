"""Matern covariance kernels and the (rho, sigma^2) <-> (kappa, tau) map.

The range parametrization follows the convention in which the
correlation has dropped to about 0.13 at distance rho:

    C(h) = sigma^2 (sqrt(8 nu) h / rho)^nu K_nu(sqrt(8 nu) h / rho)
           / (Gamma(nu) 2^(nu-1)).

The alternative (kappa, tau) coordinates are the natural ones for the
Whittle stochastic PDE view of the field; kappa = sqrt(8 nu) / rho and
tau is a precision-like scale.  Both directions of the map are exact.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .bessel import kv_scalar


class FactorizationError(RuntimeError):
    """A covariance or precision matrix could not be Cholesky-factorized."""


def _check_positive(**kwargs: float) -> None:
    for name, value in kwargs.items():
        if not value > 0.0:
            raise ValueError(f"{name} must be positive, got {value}")


@dataclass(frozen=True)
class MaternParams:
    """Range, marginal variance, smoothness, and spatial dimension."""

    rho: float
    sigma2: float
    nu: float
    dim: int

    def __post_init__(self) -> None:
        _check_positive(rho=self.rho, sigma2=self.sigma2, nu=self.nu)
        if self.dim not in (1, 2, 3):
            raise ValueError(f"dim must be 1, 2 or 3, got {self.dim}")


@dataclass(frozen=True)
class SpdeParams:
    """Inverse-range kappa and precision-like scale tau."""

    kappa: float
    tau: float
    nu: float
    dim: int

    def __post_init__(self) -> None:
        _check_positive(kappa=self.kappa, tau=self.tau, nu=self.nu)
        if self.dim not in (1, 2, 3):
            raise ValueError(f"dim must be 1, 2 or 3, got {self.dim}")

    @property
    def alpha(self) -> float:
        return self.nu + self.dim / 2.0


def spde_scale_const(nu: float, dim: int) -> float:
    """C(nu) = Gamma(nu) / (Gamma(nu + d/2) (4 pi)^(d/2))."""
    return math.gamma(nu) / (math.gamma(nu + dim / 2.0) * (4.0 * math.pi) ** (dim / 2.0))


def to_spde(params: MaternParams) -> SpdeParams:
    """Convert range/variance coordinates to (kappa, tau)."""
    kappa = math.sqrt(8.0 * params.nu) / params.rho
    tau = spde_scale_const(params.nu, params.dim) / (params.sigma2 * kappa ** (2.0 * params.nu))
    return SpdeParams(kappa=kappa, tau=tau, nu=params.nu, dim=params.dim)


def from_spde(params: SpdeParams) -> MaternParams:
    """Convert (kappa, tau) coordinates back to range/variance."""
    rho = math.sqrt(8.0 * params.nu) / params.kappa
    sigma2 = spde_scale_const(params.nu, params.dim) / (
        params.kappa ** (2.0 * params.nu) * params.tau
    )
    return MaternParams(rho=rho, sigma2=sigma2, nu=params.nu, dim=params.dim)


def matern_cov(h, params: MaternParams):
    """Covariance at distance h (scalar or array), with the exact h=0 limit."""
    h_arr = np.asarray(h, dtype=float)
    if np.any(h_arr < 0.0):
        raise ValueError("distances must be nonnegative")
    scaled = math.sqrt(8.0 * params.nu) * h_arr / params.rho
    if params.nu == 0.5:
        out = params.sigma2 * np.exp(-scaled)
    else:
        norm = params.sigma2 / (math.gamma(params.nu) * 2.0 ** (params.nu - 1.0))
        out = np.empty_like(scaled)
        flat_s = scaled.ravel()
        flat_o = out.ravel()
        for i, s in enumerate(flat_s):
            if s == 0.0:
                flat_o[i] = params.sigma2
            else:
                flat_o[i] = norm * s**params.nu * kv_scalar(params.nu, s)
    out = np.where(scaled == 0.0, params.sigma2, out)
    return float(out) if np.isscalar(h) or np.ndim(h) == 0 else out


def dcov_drho(h, params: MaternParams):
    """d/d rho of the exponential (nu = 1/2) kernel: sigma^2 (2h/rho^2) e^{-2h/rho}."""
    if params.nu != 0.5:
        raise ValueError(f"range derivative implemented for nu = 0.5 only, got nu = {params.nu}")
    h_arr = np.asarray(h, dtype=float)
    out = params.sigma2 * (2.0 * h_arr / params.rho**2) * np.exp(-2.0 * h_arr / params.rho)
    return float(out) if np.ndim(h) == 0 else out


class Design:
    """A fixed set of observation locations with cached pairwise distances."""

    def __init__(self, locations) -> None:
        loc = np.atleast_2d(np.asarray(locations, dtype=float))
        if loc.ndim != 2 or loc.shape[1] not in (1, 2, 3):
            raise ValueError(f"locations must be (n, d) with d in 1..3, got {loc.shape}")
        self.locations = loc
        self.locations.setflags(write=False)

    @property
    def n(self) -> int:
        return self.locations.shape[0]

    @property
    def dim(self) -> int:
        return self.locations.shape[1]

    @cached_property
    def distances(self) -> np.ndarray:
        diff = self.locations[:, None, :] - self.locations[None, :, :]
        d = np.sqrt(np.sum(diff * diff, axis=-1))
        np.fill_diagonal(d, 0.0)
        d = 0.5 * (d + d.T)
        d.setflags(write=False)
        return d

    @classmethod
    def random_uniform(cls, n: int, dim: int, rng: np.random.Generator, low=0.0, high=1.0) -> "Design":
        return cls(rng.uniform(low, high, size=(n, dim)))

    @classmethod
    def from_csv(cls, path) -> "Design":
        rows = []
        with open(path, newline="") as fh:
            for record in csv.reader(fh):
                if not record:
                    continue
                try:
                    rows.append([float(v) for v in record])
                except ValueError:
                    continue  # header line
        if not rows:
            raise ValueError(f"no coordinate rows found in {path}")
        return cls(np.asarray(rows))

    def to_csv(self, path) -> None:
        header = ["x", "y", "z"][: self.dim]
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for row in self.locations:
                writer.writerow([repr(float(v)) for v in row])


def cov_matrix(design: Design, params: MaternParams, nugget: float = 0.0) -> np.ndarray:
    """Dense covariance matrix Sigma_ij = C(|s_i - s_j|) + nugget 1[i = j]."""
    if nugget < 0.0:
        raise ValueError(f"nugget must be nonnegative, got {nugget}")
    d = design.distances
    if nugget == 0.0 and design.n > 1:
        off = d + np.eye(design.n)
        if np.any(off == 0.0):
            raise FactorizationError(
                "duplicated locations make the covariance singular; use a positive nugget"
            )
    sigma = matern_cov(d, params)
    if nugget > 0.0:
        sigma = sigma + nugget * np.eye(design.n)
    return sigma
