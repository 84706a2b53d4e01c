"""Non-stationary Gaussian field on a regular grid, driven by covariates.

The field solves, on a rectangle D with Neumann boundaries,

    (R(s)^-2 - Laplace) (u / S) = sqrt(4 pi) R(s)^-1 W,

where R controls the local range and S the local standard deviation.
Both log-fields are affine in centered covariate bases,

    log R = log(rho / sqrt(8)) + sum_i theta1_i f1_i,
    log S = log(sigma)         + sum_i theta2_i f2_i,

so theta = 0 recovers the stationary nu = 1 Matern field exactly at the
discretized level.  Discretization uses a lumped mass h^2 I and the
5-point Neumann stiffness; with K = D_{R^-2} C + G the precision of
v = u/S is Q_v = (1/4pi) K^T (D_{R^-2} C)^{-1} K and
Q_u = D_{1/S} Q_v D_{1/S}.

Coefficient priors are Gramian-weighted Gaussians (unit g-prior) with
penalised-complexity hyperpriors on the two precisions, so the model
shrinks towards stationarity.  Hyperparameter rates can be calibrated
either through the maximal multiplicative effect or through frequentist
coverage of the theta intervals under a stationary generator.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.linalg import cho_solve_banded, cholesky_banded, solve_banded
from scipy.special import ndtr

from .matern import FactorizationError, MaternParams
from .mcmc import Chain, McmcConfig, _Adaptation, equal_tailed_ci
from .rng import substream

_SQRT8 = math.sqrt(8.0)
_LOG_4PI = math.log(4.0 * math.pi)

# widest tolerable within-domain variation of log R or log S before the
# precision conditioning leaves double precision entirely; individual
# solves inside this limit are still verified against their residuals
FIELD_SPAN_MAX = 10.0


# ---------------------------------------------------------------------------
# Grid, bases, model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Grid:
    """Uniform rectangular grid, nodes stored row-major (x fastest)."""

    x0: float
    x1: float
    y0: float
    y1: float
    nx: int
    ny: int

    def __post_init__(self) -> None:
        if self.nx < 8 or self.ny < 8:
            raise ValueError("need at least 8 nodes per axis")
        hx = (self.x1 - self.x0) / (self.nx - 1)
        hy = (self.y1 - self.y0) / (self.ny - 1)
        if hx <= 0 or abs(hx - hy) > 1e-9 * hx:
            raise ValueError("grid spacing must be uniform and equal in x and y")

    @property
    def h(self) -> float:
        return (self.x1 - self.x0) / (self.nx - 1)

    @property
    def n_nodes(self) -> int:
        return self.nx * self.ny

    def nodes(self) -> np.ndarray:
        xs = self.x0 + self.h * np.arange(self.nx)
        ys = self.y0 + self.h * np.arange(self.ny)
        gx, gy = np.meshgrid(xs, ys)
        return np.column_stack([gx.ravel(), gy.ravel()])

    def boundary_mask(self) -> np.ndarray:
        mask = np.zeros((self.ny, self.nx), dtype=bool)
        mask[0, :] = mask[-1, :] = True
        mask[:, 0] = mask[:, -1] = True
        return mask.ravel()

    def interior_mask(self, margin: float) -> np.ndarray:
        """Nodes at least ``margin`` away from every edge of the rectangle."""
        pts = self.nodes()
        return (
            (pts[:, 0] >= self.x0 + margin)
            & (pts[:, 0] <= self.x1 - margin)
            & (pts[:, 1] >= self.y0 + margin)
            & (pts[:, 1] <= self.y1 - margin)
        )


def grid_laplacian(grid: Grid) -> sp.csr_matrix:
    """5-point Neumann stiffness (graph Laplacian of the grid)."""

    def lap1d(n: int) -> sp.csr_matrix:
        main = np.full(n, 2.0)
        main[0] = main[-1] = 1.0
        off = -np.ones(n - 1)
        return sp.diags([off, main, off], [-1, 0, 1], format="csr")

    gx = lap1d(grid.nx)
    gy = lap1d(grid.ny)
    return (sp.kron(sp.eye(grid.ny), gx) + sp.kron(lap1d(grid.ny), sp.eye(grid.nx))).tocsr()


class BasisSet:
    """Centered per-node covariate columns with their normalized Gramian."""

    def __init__(self, node_values: np.ndarray, grid: Grid) -> None:
        values = np.atleast_2d(np.asarray(node_values, dtype=float))
        if values.shape[0] != grid.n_nodes:
            values = values.T
        if values.shape[0] != grid.n_nodes:
            raise ValueError("basis values must be given per grid node")
        centered = values - values.mean(axis=0, keepdims=True)
        self.functions = centered
        self.gramian = centered.T @ centered / grid.n_nodes

    @property
    def size(self) -> int:
        return self.functions.shape[1]

    def is_degenerate(self) -> bool:
        return self.size == 0 or not np.any(self.functions)


@dataclass(frozen=True)
class NonStatModel:
    grid: Grid
    range_basis: BasisSet
    sd_basis: BasisSet
    theta1: np.ndarray
    theta2: np.ndarray
    tau1: float
    tau2: float
    stationary: MaternParams
    lambda1: float
    lambda2: float

    def __post_init__(self) -> None:
        if self.stationary.nu != 1.0 or self.stationary.dim != 2:
            raise ValueError("the grid construction requires nu = 1 in dimension 2")
        if len(self.theta1) != self.range_basis.size or len(self.theta2) != self.sd_basis.size:
            raise ValueError("coefficient lengths must match the basis sizes")

    def log_r_field(self) -> np.ndarray:
        base = math.log(self.stationary.rho / _SQRT8)
        out = np.full(self.grid.n_nodes, base)
        if self.range_basis.size:
            out = out + self.range_basis.functions @ np.asarray(self.theta1, dtype=float)
        return out

    def log_s_field(self) -> np.ndarray:
        base = 0.5 * math.log(self.stationary.sigma2)
        out = np.full(self.grid.n_nodes, base)
        if self.sd_basis.size:
            out = out + self.sd_basis.functions @ np.asarray(self.theta2, dtype=float)
        return out


def build_precision(model: NonStatModel) -> sp.csr_matrix:
    """Sparse precision of the field values at the grid nodes."""
    return _assemble_precision(
        model.grid, grid_laplacian(model.grid), model.log_r_field(), model.log_s_field()
    )


def _assemble_precision(grid: Grid, G: sp.csr_matrix, log_r, log_s) -> sp.csr_matrix:
    if not (np.all(np.isfinite(log_r)) and np.all(np.isfinite(log_s))):
        raise FactorizationError("range or sd field is not finite at every node")
    d = grid.h**2 * np.exp(-2.0 * np.asarray(log_r))
    K = G + sp.diags(d)
    Qv = (K.T @ sp.diags(1.0 / d) @ K) / (4.0 * math.pi)
    inv_s = sp.diags(np.exp(-np.asarray(log_s)))
    return (inv_s @ Qv @ inv_s).tocsr()


def precision_to_coo_text(Q: sp.spmatrix, path) -> None:
    """Full symmetric matrix as '(i, j, value)' text rows, zero-based."""
    coo = Q.tocoo()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        for i, j, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{i} {j} {float(v)!r}\n")


# ---------------------------------------------------------------------------
# Banded solver workspace
# ---------------------------------------------------------------------------


def _sparse_to_banded(Q: sp.spmatrix, bw: int) -> np.ndarray:
    """Lower LAPACK banded storage: ab[i - j, j] = Q[i, j] for i >= j."""
    coo = Q.tocoo()
    ab = np.zeros((bw + 1, Q.shape[0]))
    keep = coo.row >= coo.col
    rows, cols, data = coo.row[keep], coo.col[keep], coo.data[keep]
    if np.any(rows - cols > bw):
        raise ValueError("matrix exceeds the declared bandwidth")
    ab[rows - cols, cols] = data
    return ab


def _chol_banded(ab: np.ndarray):
    try:
        return cholesky_banded(ab, lower=True, check_finite=False)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise FactorizationError("banded matrix is not positive definite") from exc


def _banded_logdet(factor: np.ndarray) -> float:
    return 2.0 * float(np.sum(np.log(factor[0, :])))


def _banded_sample(factor: np.ndarray, eps: np.ndarray) -> np.ndarray:
    """Solve L^T x = eps for Q = L L^T, so x ~ N(0, Q^{-1}) for standard eps."""
    bw, n = factor.shape[0] - 1, factor.shape[1]
    gb = np.zeros_like(factor)
    for m in range(bw + 1):
        gb[bw - m, m:] = factor[m, : n - m]
    return solve_banded((0, bw), gb, eps, check_finite=False)


def _banded_symmetric_matvec(ab: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Q @ x for Q in lower banded storage ab[m, j] = Q[j+m, j]."""
    n = ab.shape[1]
    out = ab[0] * x
    for m in range(1, ab.shape[0]):
        row = ab[m, : n - m]
        if not row.any():
            continue
        out[m:] += row * x[: n - m]
        out[: n - m] += row * x[m:]
    return out


def observation_matrix(grid: Grid, sites: np.ndarray) -> sp.csr_matrix:
    """Bilinear interpolation weights from grid nodes to observation sites."""
    sites = np.atleast_2d(np.asarray(sites, dtype=float))
    h = grid.h
    fx = np.clip((sites[:, 0] - grid.x0) / h, 0.0, grid.nx - 1 - 1e-12)
    fy = np.clip((sites[:, 1] - grid.y0) / h, 0.0, grid.ny - 1 - 1e-12)
    ix = np.floor(fx).astype(int)
    iy = np.floor(fy).astype(int)
    tx = fx - ix
    ty = fy - iy
    base = iy * grid.nx + ix
    n = len(sites)
    rows = np.repeat(np.arange(n), 4)
    cols = np.column_stack([base, base + 1, base + grid.nx, base + grid.nx + 1]).ravel()
    weights = np.column_stack(
        [(1 - tx) * (1 - ty), tx * (1 - ty), (1 - tx) * ty, tx * ty]
    ).ravel()
    return sp.csr_matrix((weights, (rows, cols)), shape=(n, grid.n_nodes))


class GridWorkspace:
    """Cached structure for repeated likelihood evaluations on one grid.

    Precomputes the stencil index arrays of the fixed sparsity pattern so
    each evaluation assembles the precision directly in LAPACK banded
    storage with plain vectorized arithmetic, then refactorizes.
    """

    _OFFSETS = ("c", "e", "w", "n", "s")  # 0, +1, -1, +nx, -nx

    def __init__(self, grid: Grid, range_funcs: np.ndarray, sd_funcs: np.ndarray, sites) -> None:
        self.grid = grid
        self.range_funcs = np.atleast_2d(np.asarray(range_funcs, dtype=float)).reshape(
            grid.n_nodes, -1
        )
        self.sd_funcs = np.atleast_2d(np.asarray(sd_funcs, dtype=float)).reshape(
            grid.n_nodes, -1
        )
        self.bw_k = grid.nx
        self.bw = 2 * grid.nx
        self.A = observation_matrix(grid, sites)
        self.AtA_banded = _sparse_to_banded((self.A.T @ self.A).tocsr(), self.bw)
        self.n_obs = self.A.shape[0]

        nx, ny, n = grid.nx, grid.ny, grid.n_nodes
        ix = np.tile(np.arange(nx), ny)
        iy = np.repeat(np.arange(ny), nx)
        valid = {
            "c": np.ones(n, dtype=bool),
            "e": ix < nx - 1,
            "w": ix > 0,
            "n": iy < ny - 1,
            "s": iy > 0,
        }
        self._valid = valid
        self._shift = {"c": 0, "e": 1, "w": -1, "n": nx, "s": -nx}
        self._degree = sum(valid[o].astype(float) for o in ("e", "w", "n", "s"))
        # ordered stencil pairs (a, b) with positive entry offset shift(b)-shift(a)
        pairs = []
        for a in self._OFFSETS:
            for b in self._OFFSETS:
                off = self._shift[b] - self._shift[a]
                if off > 0:
                    mask = valid[a] & valid[b]
                    pairs.append((a, b, off, mask, np.where(mask)[0]))
        self._pairs = pairs
        self._diag_idx = [(a, valid[a], np.where(valid[a])[0]) for a in self._OFFSETS]

    def log_fields(self, log_rho: float, log_sigma: float, theta1, theta2):
        log_r = np.full(self.grid.n_nodes, log_rho - 0.5 * math.log(8.0))
        if len(theta1):
            log_r = log_r + self.range_funcs @ np.asarray(theta1, dtype=float)
        log_s = np.full(self.grid.n_nodes, log_sigma)
        if len(theta2):
            log_s = log_s + self.sd_funcs @ np.asarray(theta2, dtype=float)
        return log_r, log_s

    def precision_banded(self, log_r: np.ndarray, log_s: np.ndarray):
        """Banded lower form of Q_u plus its log determinant.

        Fields whose log-range or log-sd span more than ``FIELD_SPAN_MAX``
        produce precision matrices beyond double-precision conditioning
        (the factorized likelihood would be garbage), so such states are
        rejected as infeasible rather than silently evaluated.
        """
        grid = self.grid
        n, u = grid.n_nodes, self.bw
        for field in (log_r, log_s):
            if (
                abs(field).max() > 20.0
                or field.max() - field.min() > FIELD_SPAN_MAX
            ):
                raise FactorizationError("range or sd field out of the feasible domain")
        d = grid.h**2 * np.exp(-2.0 * log_r)
        inv_d = 1.0 / d
        center = d + self._degree  # diagonal of K; off-stencil entries are -1

        ab = np.zeros((u + 1, n))
        for a, mask, idx in self._diag_idx:
            v = center[idx] if a == "c" else -1.0
            contrib = (v * v if a == "c" else 1.0) * inv_d[idx]
            ab[0, idx + self._shift[a]] += contrib
        for a, b, off, mask, idx in self._pairs:
            # entry (k + shift(b), k + shift(a)) sits in lower band row `off`
            va = center[idx] if a == "c" else -1.0
            vb = center[idx] if b == "c" else -1.0
            ab[off, idx + self._shift[a]] += va * vb * inv_d[idx]
        ab /= 4.0 * math.pi

        inv_s = np.exp(-log_s)
        ab[0] *= inv_s * inv_s
        for off in (1, 2, grid.nx - 1, grid.nx, grid.nx + 1, 2 * grid.nx):
            ab[off, : n - off] *= inv_s[off:] * inv_s[: n - off]

        # logdet via K (bandwidth nx), cheaper than factorizing Q_u itself
        abk = np.zeros((self.bw_k + 1, n))
        abk[0] = center
        abk[1, self._valid["e"]] = -1.0
        abk[grid.nx, self._valid["n"]] = -1.0
        k_factor = _chol_banded(abk)
        logdet = (
            -n * _LOG_4PI
            + 2.0 * _banded_logdet(k_factor)
            - float(np.sum(np.log(d)))
            - 2.0 * float(np.sum(log_s))
        )
        return ab, logdet

    def marginal_loglik(self, y_centered: np.ndarray, log_sigma_n: float, ab_q, logdet_q):
        """log p(y | params) with the latent field integrated out."""
        s2n = math.exp(2.0 * log_sigma_n)
        ab_c = ab_q + self.AtA_banded / s2n
        c_factor = _chol_banded(ab_c)
        b = self.A.T @ y_centered / s2n
        mu = cho_solve_banded((c_factor, True), b, check_finite=False)
        # the factorization can succeed yet be meaningless when the field
        # is near the conditioning limit; verify the solve actually solved
        if self.n_obs:
            scale = float(np.abs(b).max())
            if scale > 0.0:
                resid = _banded_symmetric_matvec(ab_c, mu) - b
                if not np.all(np.isfinite(mu)) or float(np.abs(resid).max()) > 1e-6 * scale:
                    raise FactorizationError("ill-conditioned observation precision")
        quad = float(y_centered @ y_centered) / s2n - float(b @ mu)
        n = self.n_obs
        return (
            -0.5 * n * math.log(2.0 * math.pi)
            - n * log_sigma_n
            + 0.5 * logdet_q
            - 0.5 * _banded_logdet(c_factor)
            - 0.5 * quad
        ), c_factor, mu

    def sample_field(self, log_r, log_s, rng: np.random.Generator) -> np.ndarray:
        ab, _ = self.precision_banded(log_r, log_s)
        factor = _chol_banded(ab)
        return _banded_sample(factor, rng.standard_normal(self.grid.n_nodes))

    def conditional_field_draw(self, c_factor, mu, rng: np.random.Generator) -> np.ndarray:
        return mu + _banded_sample(c_factor, rng.standard_normal(self.grid.n_nodes))


# ---------------------------------------------------------------------------
# Priors on the extra flexibility
# ---------------------------------------------------------------------------


def gprior_logdensity(theta, gramian, tau: float) -> float:
    """log N(theta; 0, tau^{-1} S^{-1}) with S the normalized Gramian."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    gramian = np.atleast_2d(np.asarray(gramian, dtype=float))
    n = len(theta)
    sign, logdet_s = np.linalg.slogdet(gramian)
    if sign <= 0:
        raise ValueError("Gramian must be symmetric positive definite")
    quad = float(theta @ gramian @ theta)
    return 0.5 * (n * math.log(tau) + logdet_s - tau * quad - n * math.log(2.0 * math.pi))


def pc_precision_logdensity(tau, lam: float):
    """log of (lam/2) tau^{-3/2} exp(-lam tau^{-1/2}); shrinks to no effect."""
    tau = np.asarray(tau, dtype=float)
    if np.any(tau <= 0.0) or lam <= 0.0:
        raise ValueError("tau and lam must be positive")
    out = math.log(lam / 2.0) - 1.5 * np.log(tau) - lam / np.sqrt(tau)
    return float(out) if out.ndim == 0 else out


class CalibrationError(RuntimeError):
    """No hyperparameter candidate satisfied the calibration target."""

    def __init__(self, message: str, table=None) -> None:
        super().__init__(message)
        self.table = table


def max_effect_calibration(
    basis: BasisSet,
    C: float,
    alpha: float,
    mc_draws: int = 100000,
    seed: int = 0,
    rel_tol: float = 0.01,
) -> float:
    """Rate lambda with P(max_s |sum_i theta_i f_i(s)| > C) = alpha.

    Draws tau from its hyperprior and theta | tau from the g-prior; with
    common random numbers the exceedance estimate is monotone in lambda
    and bisection converges to ``rel_tol`` relative accuracy.
    """
    if C <= 0.0 or not 0.0 < alpha < 1.0:
        raise ValueError("need C > 0 and alpha in (0, 1)")
    rng = substream(seed, 2718)
    chol_s = np.linalg.cholesky(basis.gramian)
    z = rng.standard_normal((mc_draws, basis.size))
    eta = np.linalg.solve(chol_s.T[None, :, :], z[:, :, None])[:, :, 0]  # N(0, S^{-1})
    m_max = np.max(np.abs(eta @ basis.functions.T), axis=1)
    e = rng.exponential(1.0, size=mc_draws)  # tau^{-1/2} = e / lambda
    products = e * m_max

    def exceed(lam: float) -> float:
        return float(np.mean(products > lam * C))

    lo, hi = 1e-8, 1e8
    if not (exceed(lo) >= alpha >= exceed(hi)):
        raise CalibrationError(
            f"target alpha={alpha} not bracketed; max effect may be degenerate or C too large"
        )
    while hi / lo > 1.0 + rel_tol:
        mid = math.sqrt(lo * hi)
        if exceed(mid) > alpha:
            lo = mid
        else:
            hi = mid
    return math.sqrt(lo * hi)


# ---------------------------------------------------------------------------
# Posterior sampling (blocked Metropolis with the field integrated out)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NonStatPriorSpec:
    """Hyperparameters of the full non-stationary fit."""

    rho0: float
    alpha_rho: float
    sigma0: float
    alpha_sigma: float
    sigma_n0: float
    alpha_sigma_n: float
    lambda1: float
    lambda2: float

    @property
    def lambda_range(self) -> float:
        return -self.rho0 * math.log(self.alpha_rho)  # d = 2

    @property
    def lambda_sigma(self) -> float:
        return -math.log(self.alpha_sigma) / self.sigma0

    @property
    def lambda_sigma_n(self) -> float:
        return -math.log(self.alpha_sigma_n) / self.sigma_n0


def _stationary_log_prior(spec: NonStatPriorSpec, log_rho, log_sigma, log_sigma_n):
    """PC prior for (rho, sigma, sigma_n), with log-scale Jacobians."""
    rho = np.exp(log_rho)
    lp = (
        math.log(spec.lambda_range) - 2.0 * log_rho - spec.lambda_range / rho + log_rho
    )
    lp += math.log(spec.lambda_sigma) - spec.lambda_sigma * np.exp(log_sigma) + log_sigma
    lp += (
        math.log(spec.lambda_sigma_n)
        - spec.lambda_sigma_n * np.exp(log_sigma_n)
        + log_sigma_n
    )
    return lp


def _theta_block_log_prior_nc(theta_scaled, log_tau, gramian, lam) -> float:
    """Prior in the non-centered coordinates (theta sqrt(tau), log tau).

    The rescaled coefficients are N(0, S^{-1}) independently of tau, which
    removes the funnel between the coefficients and their precision.
    """
    tau = math.exp(log_tau)
    return (
        gprior_logdensity(theta_scaled, gramian, 1.0)
        + float(pc_precision_logdensity(tau, lam))
        + log_tau
    )


def nonstat_posterior(
    y,
    sites,
    covariate_x,
    workspace: GridWorkspace,
    prior: NonStatPriorSpec,
    config: McmcConfig,
    fit_fixed_effects: bool = True,
    init: dict | None = None,
    store_predictive: bool = False,
    predictive_thin: int = 4,
) -> Chain:
    """Blocked sampler for the full model y = beta0 + x beta1 + A u + eps.

    The latent field is integrated out of every hyperparameter update and
    redrawn exactly from its Gaussian conditional when predictive samples
    are requested.  Blocks: (beta, log sigma_n, log rho, log sigma), then
    (theta1, log tau1), then (theta2, log tau2); each block adapts its own
    proposal during burn-in.
    """
    y = np.asarray(y, dtype=float)
    n1 = workspace.range_funcs.shape[1]
    n2 = workspace.sd_funcs.shape[1]
    x = np.asarray(covariate_x, dtype=float) if covariate_x is not None else None
    if fit_fixed_effects and x is None:
        raise ValueError("fixed-effect fitting requires a covariate")

    init = dict(init or {})
    lt1 = init.get("log_tau1", math.log(25.0))
    lt2 = init.get("log_tau2", math.log(25.0))
    y_mean = float(np.mean(y)) if len(y) else 0.0
    y_sd = float(np.std(y)) if len(y) else 1.0
    state = {
        "beta": np.array([init.get("beta0", y_mean), init.get("beta1", 0.0)]),
        "log_sigma_n": init.get("log_sigma_n", math.log(0.3 * max(y_sd, 1e-3))),
        "log_rho": init.get("log_rho", math.log(0.25 * (workspace.grid.x1 - workspace.grid.x0))),
        "log_sigma": init.get("log_sigma", math.log(max(y_sd, 1e-3))),
        # coefficients carried as theta * sqrt(tau) (non-centered)
        "theta1s": np.asarray(init.get("theta1", np.zeros(n1)), dtype=float)
        * math.exp(0.5 * lt1),
        "log_tau1": lt1,
        "theta2s": np.asarray(init.get("theta2", np.zeros(n2)), dtype=float)
        * math.exp(0.5 * lt2),
        "log_tau2": lt2,
    }
    if not fit_fixed_effects:
        state["beta"] = np.zeros(2)

    rng = substream(*config.seed_path())
    gram1 = workspace.range_funcs.T @ workspace.range_funcs / workspace.grid.n_nodes
    gram2 = workspace.sd_funcs.T @ workspace.sd_funcs / workspace.grid.n_nodes

    cache: dict = {}

    def thetas(st):
        return (
            st["theta1s"] * math.exp(-0.5 * st["log_tau1"]),
            st["theta2s"] * math.exp(-0.5 * st["log_tau2"]),
        )

    def field_pieces(log_rho, log_sigma, theta1, theta2):
        key = (log_rho, log_sigma, tuple(theta1), tuple(theta2))
        if cache.get("key") != key:
            log_r, log_s = workspace.log_fields(log_rho, log_sigma, theta1, theta2)
            ab, logdet = workspace.precision_banded(log_r, log_s)
            cache.update(key=key, ab=ab, logdet=logdet)
        return cache["ab"], cache["logdet"]

    def loglik(st) -> float:
        resid = y - st["beta"][0] - (x * st["beta"][1] if x is not None else 0.0)
        theta1, theta2 = thetas(st)
        try:
            ab, logdet = field_pieces(st["log_rho"], st["log_sigma"], theta1, theta2)
            ll, c_factor, mu = workspace.marginal_loglik(resid, st["log_sigma_n"], ab, logdet)
        except FactorizationError:
            return -math.inf
        cache["c_factor"], cache["mu"], cache["resid"] = c_factor, mu, resid
        return ll

    def stationary_prior(st) -> float:
        return float(
            _stationary_log_prior(prior, st["log_rho"], st["log_sigma"], st["log_sigma_n"])
        )

    def theta_prior(st, which: int) -> float:
        if which == 1:
            return _theta_block_log_prior_nc(st["theta1s"], st["log_tau1"], gram1, prior.lambda1)
        return _theta_block_log_prior_nc(st["theta2s"], st["log_tau2"], gram2, prior.lambda2)

    dim_a = (2 if fit_fixed_effects else 0) + 3
    adapt_a = _Adaptation(1, dim_a, config.target_accept)
    adapt_1 = _Adaptation(1, n1 + 1, config.target_accept) if n1 else None
    adapt_2 = _Adaptation(1, n2 + 1, config.target_accept) if n2 else None

    def pack_a(st):
        core = [st["log_sigma_n"], st["log_rho"], st["log_sigma"]]
        return np.array(list(st["beta"]) + core if fit_fixed_effects else core)

    def unpack_a(vec, st):
        out = dict(st)
        if fit_fixed_effects:
            out["beta"] = vec[:2].copy()
            vec = vec[2:]
        out["log_sigma_n"], out["log_rho"], out["log_sigma"] = vec
        return out

    names = (
        (["beta0", "beta1"] if fit_fixed_effects else [])
        + ["log_sigma_n", "log_rho", "log_sigma"]
        + [f"theta1_{i + 1}" for i in range(n1)]
        + (["log_tau1"] if n1 else [])
        + [f"theta2_{i + 1}" for i in range(n2)]
        + (["log_tau2"] if n2 else [])
    )

    def flatten(st):
        theta1, theta2 = thetas(st)
        row = (list(st["beta"]) if fit_fixed_effects else []) + [
            st["log_sigma_n"], st["log_rho"], st["log_sigma"],
        ]
        row += list(theta1) + ([st["log_tau1"]] if n1 else [])
        row += list(theta2) + ([st["log_tau2"]] if n2 else [])
        return row

    ll_cur = loglik(state)
    if not math.isfinite(ll_cur):
        raise ValueError("posterior not finite at the initial state")

    samples = np.empty((config.iters, len(names)))
    accepted = np.zeros(3)
    kept_pred: list[np.ndarray] = []
    kept_sig: list[float] = []

    for t in range(config.iters):
        # block A: fixed effects, nugget, stationary range and sd
        vec = pack_a(state)
        prop_vec = vec + adapt_a.chol[0] @ rng.standard_normal(dim_a)
        prop = unpack_a(prop_vec, state)
        ll_new = loglik(prop)
        if math.isfinite(ll_new):
            delta = (ll_new + stationary_prior(prop)) - (ll_cur + stationary_prior(state))
            a_prob = math.exp(min(0.0, delta))
        else:
            a_prob = 0.0
        if rng.random() < a_prob:
            state, ll_cur = prop, ll_new
            accepted[0] += t >= config.burn_in
        if t < config.burn_in:
            adapt_a.update(pack_a(state)[None, :], np.array([a_prob]))

        # blocks B/C: coefficients with their precision, field marginalized
        for which, adapt, nk in ((1, adapt_1, n1), (2, adapt_2, n2)):
            if not nk:
                continue
            tkey, lkey = f"theta{which}s", f"log_tau{which}"
            cur = np.concatenate([state[tkey], [state[lkey]]])
            prop_vec = cur + adapt.chol[0] @ rng.standard_normal(nk + 1)
            prop = dict(state)
            prop[tkey] = prop_vec[:nk]
            prop[lkey] = float(prop_vec[nk])
            ll_new = loglik(prop)
            if math.isfinite(ll_new):
                delta = (ll_new + theta_prior(prop, which)) - (
                    ll_cur + theta_prior(state, which)
                )
                a_prob = math.exp(min(0.0, delta))
            else:
                a_prob = 0.0
            if rng.random() < a_prob:
                state, ll_cur = prop, ll_new
                accepted[which] += t >= config.burn_in
            if t < config.burn_in:
                cur_vec = np.concatenate([state[tkey], [state[lkey]]])
                adapt.update(cur_vec[None, :], np.array([a_prob]))

        samples[t] = flatten(state)

        if store_predictive and t >= config.burn_in and (t - config.burn_in) % predictive_thin == 0:
            loglik(state)  # refresh cache for the current state
            u = workspace.conditional_field_draw(cache["c_factor"], cache["mu"], rng)
            mean = workspace.A @ u + (y - cache["resid"])
            kept_pred.append(mean)
            kept_sig.append(math.exp(state["log_sigma_n"]))

    kept = config.iters - config.burn_in
    extras = {}
    if store_predictive:
        extras["predictive_means"] = np.asarray(kept_pred)
        extras["sigma_n_draws"] = np.asarray(kept_sig)
    return Chain(
        samples=samples,
        names=names,
        burn_in=config.burn_in,
        acceptance_rate=float(accepted[0] / kept),
        seed=config.seed_path(),
        extras=extras,
    )


# ---------------------------------------------------------------------------
# Coverage-based hyperparameter calibration
# ---------------------------------------------------------------------------


def _single_threaded_blas() -> None:
    """Workers each own one core; nested BLAS threading only causes churn."""
    try:
        from threadpoolctl import threadpool_limits

        threadpool_limits(1)
    except ImportError:
        pass


def _calibration_dataset(args):
    (grid_spec, range_funcs, sd_funcs, sites, rho, sigma, sigma_n, seed, rep) = args
    grid = Grid(*grid_spec)
    ws = GridWorkspace(grid, range_funcs, sd_funcs, sites)
    rng = substream(seed, 71, rep)
    log_r, log_s = ws.log_fields(math.log(rho), math.log(sigma), [], [])
    u = ws.sample_field(log_r, log_s, rng)
    return ws.A @ u + sigma_n * rng.standard_normal(ws.n_obs)


def _calibration_fit(args):
    (grid_spec, range_funcs, sd_funcs, sites, y, prior, config_tuple, level) = args
    grid = Grid(*grid_spec)
    ws = GridWorkspace(grid, range_funcs, sd_funcs, sites)
    config = McmcConfig(*config_tuple)
    chain = nonstat_posterior(
        y, sites, None, ws, prior, config, fit_fixed_effects=False, store_predictive=False
    )
    hits = []
    for name in chain.names:
        if name.startswith("theta"):
            ci = equal_tailed_ci(chain.column(name), level)
            hits.append(ci.contains(0.0))
    return hits


def calibrate_by_coverage(
    stationary_map: dict,
    sites: np.ndarray,
    range_basis: BasisSet,
    sd_basis: BasisSet,
    grid: Grid,
    prior_template: NonStatPriorSpec,
    lambda_grid=(2.0, 5.0, 10.0, 20.0, 50.0, 100.0),
    n_datasets: int = 100,
    level: float = 0.95,
    config: McmcConfig | None = None,
    seed: int = 0,
    n_workers: int = 1,
    coverage_slack: float = 0.02,
):
    """Smallest rate whose worst-component theta coverage is near nominal.

    Simulates ``n_datasets`` stationary datasets at the supplied MAP
    values, fits the non-stationary model to each under every candidate
    rate (ascending), and returns the first rate whose worst coverage of
    the truth theta = 0 lies within ``coverage_slack`` of ``level``.
    """
    if range_basis.is_degenerate() and sd_basis.is_degenerate():
        lam = float(min(lambda_grid))
        return (lam, lam), []

    config = config or McmcConfig(iters=2000, burn_in=700, seed=seed)
    rho, sigma, sigma_n = (
        stationary_map["rho"], stationary_map["sigma"], stationary_map["sigma_n"],
    )
    grid_spec = (grid.x0, grid.x1, grid.y0, grid.y1, grid.nx, grid.ny)
    gen_args = [
        (grid_spec, range_basis.functions, sd_basis.functions, sites, rho, sigma, sigma_n, seed, r)
        for r in range(n_datasets)
    ]
    datasets = [_calibration_dataset(a) for a in gen_args]

    lo = max(level - coverage_slack, 0.0)
    hi = min(level + coverage_slack, 1.0)
    table = []
    for lam in sorted(lambda_grid):
        prior = NonStatPriorSpec(
            rho0=prior_template.rho0,
            alpha_rho=prior_template.alpha_rho,
            sigma0=prior_template.sigma0,
            alpha_sigma=prior_template.alpha_sigma,
            sigma_n0=prior_template.sigma_n0,
            alpha_sigma_n=prior_template.alpha_sigma_n,
            lambda1=lam,
            lambda2=lam,
        )
        fit_args = [
            (
                grid_spec, range_basis.functions, sd_basis.functions, sites, y, prior,
                (config.iters, config.burn_in, config.target_accept, (seed, 72, int(lam * 1000), r)),
                level,
            )
            for r, y in enumerate(datasets)
        ]
        if n_workers > 1:
            with ProcessPoolExecutor(
                max_workers=n_workers, initializer=_single_threaded_blas
            ) as pool:
                hit_lists = list(pool.map(_calibration_fit, fit_args, chunksize=4))
        else:
            hit_lists = [_calibration_fit(a) for a in fit_args]
        coverages = np.mean(np.asarray(hit_lists, dtype=float), axis=0)
        worst = float(np.min(coverages))
        table.append({"lambda": lam, "worst_coverage": worst,
                      "coverages": [float(c) for c in coverages]})
        if lo <= worst <= hi:
            return (lam, lam), table
    raise CalibrationError("no candidate rate achieved near-nominal coverage", table=table)


# ---------------------------------------------------------------------------
# Predictive scoring
# ---------------------------------------------------------------------------

_INV_SQRT_PI = 1.0 / math.sqrt(math.pi)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def crps_gaussian(mu, sd, y):
    """Closed-form CRPS of a Gaussian predictive; lower is better."""
    mu = np.asarray(mu, dtype=float)
    sd = np.asarray(sd, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(sd <= 0.0):
        raise ValueError("sd must be positive")
    z = (y - mu) / sd
    phi = _INV_SQRT_2PI * np.exp(-0.5 * z * z)
    out = sd * (z * (2.0 * ndtr(z) - 1.0) + 2.0 * phi - _INV_SQRT_PI)
    return float(out) if out.ndim == 0 else out


def _weighted_energy_crps(x: np.ndarray, w: np.ndarray, y: float) -> float:
    order = np.argsort(x)
    xs, ws = x[order], w[order]
    ws = ws / ws.sum()
    term1 = float(np.sum(ws * np.abs(xs - y)))
    cum = np.cumsum(ws) - ws
    pair_mean = 2.0 * float(np.sum(ws * xs * (2.0 * cum + ws - 1.0)))
    return term1 - 0.5 * pair_mean


def loo_scores(chain: Chain, y) -> dict:
    """Leave-one-out scores from the chain's predictive draws.

    The conditional predictive ordinate for point i is the harmonic mean
    of the per-iteration densities; the same weights give leave-one-out
    predictive moments for a Gaussian-approximation CRPS and weights for
    a sample-based (energy form) CRPS computed on simulated predictive
    draws.
    """
    y = np.asarray(y, dtype=float)
    means = chain.extras.get("predictive_means")
    sig = chain.extras.get("sigma_n_draws")
    if means is None or sig is None:
        raise ValueError("chain does not carry predictive draws")
    m, n = means.shape
    sig = np.asarray(sig, dtype=float)[:, None]

    z = (y[None, :] - means) / sig
    log_dens = -0.5 * z * z - np.log(sig) - 0.5 * math.log(2.0 * math.pi)
    # log CPO_i = -logmeanexp(-log_dens)
    neg = -log_dens
    mx = neg.max(axis=0)
    log_cpo = -(mx + np.log(np.mean(np.exp(neg - mx), axis=0)))
    log_score = float(np.mean(log_cpo))

    log_w = neg - mx[None, :]
    w = np.exp(log_w)
    w /= w.sum(axis=0, keepdims=True)
    warnings = []
    if float(w.max()) > 0.2:
        warnings.append(
            "a leave-one-out weight exceeds 0.2 of the total; harmonic-mean "
            "estimates may be unstable"
        )

    loo_mean = np.sum(w * means, axis=0)
    loo_var = np.sum(w * (means**2 + sig**2), axis=0) - loo_mean**2
    loo_var = np.maximum(loo_var, 1e-12)
    crps_gauss = crps_gaussian(loo_mean, np.sqrt(loo_var), y)

    rng = substream(9001, m, n)
    draws = means + sig * rng.standard_normal(means.shape)
    crps_samp = np.array(
        [_weighted_energy_crps(draws[:, i], w[:, i], y[i]) for i in range(n)]
    )

    per_point = {
        "log_cpo": log_cpo,
        "crps_gaussian": np.asarray(crps_gauss),
        "crps_sample": crps_samp,
    }
    return {
        "log_score": log_score,
        "crps_gaussian": float(np.mean(crps_gauss)),
        "crps_sample": float(np.mean(crps_samp)),
        "per_point": per_point,
        "warnings": warnings,
    }


# ---------------------------------------------------------------------------
# Raster file format
# ---------------------------------------------------------------------------


def raster_to_csv(values: np.ndarray, grid: Grid, path) -> None:
    """Row-major raster with a leading header comment carrying the grid."""
    values = np.asarray(values, dtype=float).reshape(grid.ny, grid.nx)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(
            f"# raster nx={grid.nx} ny={grid.ny} "
            f"x0={grid.x0!r} x1={grid.x1!r} y0={grid.y0!r} y1={grid.y1!r}\n"
        )
        writer = csv.writer(fh)
        for row in values:
            writer.writerow([repr(float(v)) for v in row])


def raster_from_csv(path) -> tuple[np.ndarray, Grid]:
    with open(path, newline="") as fh:
        header = fh.readline()
        if not header.startswith("# raster"):
            raise ValueError("missing raster header line")
        meta = dict(tok.split("=") for tok in header.split()[2:])
        grid = Grid(
            x0=float(meta["x0"]), x1=float(meta["x1"]),
            y0=float(meta["y0"]), y1=float(meta["y1"]),
            nx=int(meta["nx"]), ny=int(meta["ny"]),
        )
        rows = [[float(v) for v in rec] for rec in csv.reader(fh) if rec]
    values = np.asarray(rows)
    if values.shape != (grid.ny, grid.nx):
        raise ValueError("raster body does not match the header dimensions")
    return values.ravel(), grid
