"""Exact simulation of Gaussian fields at finite designs, and their likelihoods.

Sampling is by dense Cholesky of the covariance at the design; every draw
records its seed so a run can be replayed exactly.  A diagonal jitter of
1e-10 * sigma^2 is added once if the first factorization fails (duplicated
or near-duplicated points); failure after the jitter is an error.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .matern import Design, FactorizationError, MaternParams, cov_matrix
from .rng import substream


@dataclass(frozen=True)
class Realization:
    """Field values at a design, plus the seed that produced them."""

    design: Design
    values: np.ndarray
    seed: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.values) != self.design.n:
            raise ValueError("values length must match the number of locations")


@dataclass(frozen=True)
class GeoModel:
    """Linear fixed effects plus a latent field plus independent noise."""

    beta0: float
    beta1: float
    covariate_x: np.ndarray
    nugget_sd: float
    field: MaternParams

    def __post_init__(self) -> None:
        if self.nugget_sd < 0.0:
            raise ValueError("nugget_sd must be nonnegative")


def chol_with_jitter(sigma: np.ndarray, sigma2: float):
    """Lower Cholesky factor; retries once with 1e-10 * sigma2 jitter."""
    try:
        return np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        pass
    try:
        return np.linalg.cholesky(sigma + 1e-10 * sigma2 * np.eye(sigma.shape[0]))
    except np.linalg.LinAlgError as exc:
        raise FactorizationError("covariance not positive definite even with jitter") from exc


def sample_grf(design: Design, params: MaternParams, seed: int | tuple[int, ...]) -> Realization:
    """Draw u = L z with Sigma = L L^T and z from the stream keyed by seed."""
    path = (seed,) if isinstance(seed, int) else tuple(seed)
    rng = substream(*path)
    sigma = cov_matrix(design, params)
    chol = chol_with_jitter(sigma, params.sigma2)
    z = rng.standard_normal(design.n)
    return Realization(design=design, values=chol @ z, seed=path)


def sample_geomodel(model: GeoModel, design: Design, seed: int | tuple[int, ...]) -> Realization:
    """y_i = beta0 + x_i beta1 + u(s_i) + eps_i with iid Gaussian nugget."""
    x = np.asarray(model.covariate_x, dtype=float)
    if len(x) != design.n:
        raise ValueError("covariate length must match the design")
    path = (seed,) if isinstance(seed, int) else tuple(seed)
    rng = substream(*path)
    sigma = cov_matrix(design, model.field)
    chol = chol_with_jitter(sigma, model.field.sigma2)
    u = chol @ rng.standard_normal(design.n)
    eps = model.nugget_sd * rng.standard_normal(design.n)
    y = model.beta0 + x * model.beta1 + u + eps
    return Realization(design=design, values=y, seed=path)


def gaussian_loglik(y, design: Design, params: MaternParams, nugget_sd: float = 0.0) -> float:
    """Log density of y under N(0, Sigma + nugget_sd^2 I), via Cholesky."""
    y = np.asarray(y, dtype=float)
    if len(y) != design.n:
        raise ValueError("data length must match the design")
    sigma = cov_matrix(design, params, nugget=nugget_sd**2)
    try:
        factor = cho_factor(sigma, lower=True)
    except np.linalg.LinAlgError as exc:
        raise FactorizationError("observation covariance not factorizable") from exc
    logdet = 2.0 * float(np.sum(np.log(np.diag(factor[0]))))
    quad = float(y @ cho_solve(factor, y))
    return -0.5 * (design.n * math.log(2.0 * math.pi) + logdet + quad)


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------


def realization_to_csv(real: Realization, path) -> None:
    """CSV with coordinate columns plus a value column; seed in sidecar JSON."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = ["x", "y", "z"][: real.design.dim] + ["value"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for loc, val in zip(real.design.locations, real.values):
            writer.writerow([repr(float(v)) for v in loc] + [repr(float(val))])
    manifest = {"seed": list(real.seed), "n": real.design.n, "dim": real.design.dim}
    path.with_suffix(path.suffix + ".manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    )


def realization_from_csv(path) -> Realization:
    path = Path(path)
    rows = []
    with open(path, newline="") as fh:
        for record in csv.reader(fh):
            if not record:
                continue
            try:
                rows.append([float(v) for v in record])
            except ValueError:
                continue
    data = np.asarray(rows)
    design = Design(data[:, :-1])
    manifest_path = path.with_suffix(path.suffix + ".manifest.json")
    seed: tuple[int, ...] = ()
    if manifest_path.exists():
        seed = tuple(json.loads(manifest_path.read_text()).get("seed", ()))
    return Realization(design=design, values=data[:, -1], seed=seed)
