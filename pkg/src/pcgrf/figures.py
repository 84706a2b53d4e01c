"""Figure rendering for study reports.

Each study writes its figures next to the delimited output it produces;
all rendering goes through the non-interactive Agg backend so runs are
headless-safe.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _finish(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    return path


def coverage_figure(cells, path, level: float = 0.95):
    """Coverage per cell with binomial error bars and the nominal line."""
    labels = []
    for cell in cells:
        hyper = cell.prior.get("hyperparameters", {})
        if cell.prior.get("type") == "pc":
            labels.append(f"pc r0={hyper.get('rho0'):g} s0={hyper.get('sigma0'):g}")
        elif hyper:
            labels.append(f"{cell.prior.get('type')} [{hyper.get('lower'):g},{hyper.get('upper'):g}]")
        else:
            labels.append(cell.prior.get("type"))
    x = np.arange(len(cells))
    fig, ax = plt.subplots(figsize=(max(6, 1.1 * len(cells)), 4))
    for shift, which, color in ((-0.15, "range", "C0"), (0.15, "variance", "C1")):
        cov = [getattr(c, f"coverage_{which}") for c in cells]
        err = [3 * c.standard_error(which) for c in cells]
        ax.errorbar(x + shift, cov, yerr=err, fmt="o", color=color, label=which, capsize=3)
    ax.axhline(level, color="k", lw=0.8, ls="--")
    ax.set_xticks(x)
    ax.set_xticklabels(labels, rotation=30, ha="right", fontsize=8)
    ax.set_ylabel("coverage")
    ax.set_ylim(0, 1.02)
    ax.legend(frameon=False)
    return _finish(fig, path)


def ridge_figure(result, path):
    """Joint posterior clouds of (log rho, log sigma) for the two priors."""
    fig, ax = plt.subplots(figsize=(6, 5))
    styles = {"jeffreys": dict(color="k", s=4, alpha=0.25), "pc": dict(color="crimson", s=4, alpha=0.25)}
    for label, samples in result["samples"].items():
        stride = max(1, len(samples) // 4000)
        pts = samples[::stride]
        ax.scatter(pts[:, 0], pts[:, 1], label=label, **styles.get(label, {}))
    ax.set_xlabel("log range")
    ax.set_ylabel("log marginal sd")
    ax.legend(frameon=False)
    return _finish(fig, path)


def field_figure(values, grid, path, title: str = ""):
    """Raster of a per-node field."""
    fig, ax = plt.subplots(figsize=(5.5, 4.5))
    img = np.asarray(values).reshape(grid.ny, grid.nx)
    im = ax.imshow(
        img, origin="lower", extent=(grid.x0, grid.x1, grid.y0, grid.y1), cmap="viridis"
    )
    fig.colorbar(im, ax=ax, shrink=0.85)
    if title:
        ax.set_title(title)
    return _finish(fig, path)


def kld_convergence_figure(rows, limit, path):
    """Scaled lattice divergence against its continuum limit."""
    fig, ax = plt.subplots(figsize=(5.5, 4))
    sizes = [r["L"] for r in rows]
    vals = [r["scaled"] for r in rows]
    ax.plot(sizes, vals, "o-", label="lattice, scaled")
    ax.axhline(limit, color="k", ls="--", lw=0.8, label="continuum")
    ax.set_xscale("log")
    ax.set_xlabel("box size L")
    ax.set_ylabel("scaled divergence")
    ax.legend(frameon=False)
    return _finish(fig, path)


def score_comparison_figure(scores, path):
    """Bars of leave-one-out scores for stationary vs non-stationary fits."""
    metrics = ["log_score", "crps_gaussian", "crps_sample"]
    fig, axes = plt.subplots(1, len(metrics), figsize=(9, 3.2))
    for ax, metric in zip(axes, metrics):
        vals = [scores["stationary"][metric], scores["nonstationary"][metric]]
        ax.bar(["stationary", "non-stat"], vals, color=["C0", "C1"])
        ax.set_title(metric, fontsize=9)
    fig.tight_layout()
    return _finish(fig, path)


def realization_figure(realization, path):
    """Scatter of field values at the design locations."""
    fig, ax = plt.subplots(figsize=(5, 4.5))
    loc = realization.design.locations
    if loc.shape[1] == 1:
        ax.plot(loc[:, 0], realization.values, "o", ms=4)
        ax.set_xlabel("x")
        ax.set_ylabel("value")
    else:
        sc = ax.scatter(loc[:, 0], loc[:, 1], c=realization.values, cmap="viridis", s=36)
        fig.colorbar(sc, ax=ax, shrink=0.85)
        ax.set_xlabel("x")
        ax.set_ylabel("y")
    return _finish(fig, path)
