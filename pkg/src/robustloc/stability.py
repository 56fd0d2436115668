"""Stationarity and invertibility checks for the location recursion.

The filter's state-transition map is linear in the location with a random
coefficient matrix; invertibility asks that the average log operator norm of
that matrix be negative.  This module estimates the expectation by Monte
Carlo at the data-generating parameters and scans it over a grid of
autoregressive and score-loading strengths.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "RegionScan",
    "contraction_mc",
    "region_scan",
    "spectral_radius",
]


def spectral_radius(Phi: np.ndarray) -> float:
    """Largest eigenvalue modulus of a square matrix."""
    Phi = np.asarray(Phi, dtype=float)
    if Phi.ndim != 2 or Phi.shape[0] != Phi.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {Phi.shape}")
    eigvals = np.linalg.eigvals(Phi)
    return float(np.max(np.abs(eigvals))) if eigvals.size else 0.0


def _symmetric_root(Omega: np.ndarray):
    """Symmetric square root and its inverse via the eigendecomposition.

    The contraction statistic is not similarity-invariant, so the symmetric
    root is used here rather than a Cholesky factor.
    """
    lam, Q = np.linalg.eigh(Omega)
    if np.min(lam) <= 0:
        raise ValueError("scale matrix must be positive definite")
    root = (Q * np.sqrt(lam)) @ Q.T
    inv_root = (Q / np.sqrt(lam)) @ Q.T
    return root, inv_root


def contraction_mc(Phi0: np.ndarray, K0: np.ndarray, Omega0: np.ndarray,
                   nu0: float, n_draws: int = 10_000, seed: int = 0,
                   norm: str = "spectral"):
    """Monte-Carlo estimate of the mean log norm of the transition matrix.

    Draws i.i.d. standard multivariate-t innovations and averages
    ln || Phi0 + (K0/w) (2 R eps eps' R^{-1} / (nu0 w) - I) ||, with
    w = 1 + eps'eps/nu0 and R the symmetric square root of Omega0.  Returns
    (estimate, mc_se); a negative estimate (beyond its error bar) certifies
    the filter's invertibility at these parameters.  With K0 = 0 the matrix
    is the constant Phi0, so the estimate is exact with zero variance.
    """
    Phi0 = np.asarray(Phi0, dtype=float)
    K0 = np.asarray(K0, dtype=float)
    Omega0 = np.asarray(Omega0, dtype=float)
    N = Phi0.shape[0]
    if n_draws < 1000:
        raise ValueError("need at least 1000 draws for a usable error bar")
    if not (np.isfinite(nu0) and nu0 > 0):
        raise ValueError(f"nu0 must be finite and positive, got {nu0}")
    root, inv_root = _symmetric_root(Omega0)

    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n_draws, N))
    g = rng.chisquare(nu0, n_draws) / nu0
    eps = z / np.sqrt(g)[:, None]

    w = 1.0 + np.einsum("ni,ni->n", eps, eps) / nu0
    s = 1.0 / w
    left = eps @ root        # rows (R eps)'
    right = eps @ inv_root   # rows (R^{-1} eps)'
    outer = np.einsum("ni,nj->nij", left, right)
    inner = (2.0 * s * s / nu0)[:, None, None] * outer \
        - s[:, None, None] * np.eye(N)
    X = Phi0[None, :, :] + np.einsum("ab,nbc->nac", K0, inner)

    if norm == "spectral":
        norms = np.linalg.svd(X, compute_uv=False)[:, 0]
    elif norm == "fro":
        norms = np.sqrt(np.einsum("nij,nij->n", X, X))
    else:
        raise ValueError(f"unknown norm {norm!r}; use 'spectral' or 'fro'")
    with np.errstate(divide="ignore"):
        logs = np.log(norms)
    estimate = float(np.mean(logs))
    if np.isfinite(estimate):
        mc_se = float(np.std(logs, ddof=1) / np.sqrt(n_draws))
    else:
        mc_se = 0.0  # degenerate all-zero transition map
    return estimate, mc_se


@dataclass(frozen=True)
class RegionScan:
    """Grid of contraction estimates over transition and loading strengths.

    Long-form arrays of length resolution**2, row-major over (phi, k) cell
    centers; `invertible` applies the conservative cut estimate + 2 se < 0.
    """

    phi_norm: np.ndarray
    k_norm: np.ndarray
    estimate: np.ndarray
    se: np.ndarray
    invertible: np.ndarray
    resolution: int
    nu0: float
    n_draws: int
    seed: int

    def grid(self, field: str = "estimate") -> np.ndarray:
        """Reshape one long-form column to (resolution, resolution).

        Rows index phi (the autoregressive strength), columns index k.
        """
        return getattr(self, field).reshape(self.resolution, self.resolution)

    def to_frame(self):
        import pandas as pd

        return pd.DataFrame({
            "phi_norm": self.phi_norm,
            "k_norm": self.k_norm,
            "estimate": self.estimate,
            "se": self.se,
            "invertible": self.invertible,
        })

    def to_csv(self, path) -> None:
        self.to_frame().to_csv(path, index=False)


def region_scan(nu0: float, Omega0: np.ndarray, grid_resolution: int = 10,
                n_draws: int = 10_000, seed: int = 0) -> RegionScan:
    """Contraction estimates over a grid of norm pairs in (0, 1)^2.

    Cell centers sit at (i + 1/2)/resolution; each target norm pair is
    realized as a scalar multiple of the identity (so the spectral norms of
    the two coefficient matrices equal the targets exactly).  Every cell
    draws from its own substream seeded with seed XOR cell index, so the
    scan is deterministic and order-independent.
    """
    if grid_resolution < 5:
        raise ValueError("grid resolution below 5 gives no usable contour")
    Omega0 = np.asarray(Omega0, dtype=float)
    N = Omega0.shape[0]
    centers = (np.arange(grid_resolution) + 0.5) / grid_resolution
    cells = grid_resolution * grid_resolution
    phi_norm = np.repeat(centers, grid_resolution)
    k_norm = np.tile(centers, grid_resolution)
    estimate = np.empty(cells)
    se = np.empty(cells)
    for idx in range(cells):
        est, err = contraction_mc(phi_norm[idx] * np.eye(N),
                                  k_norm[idx] * np.eye(N),
                                  Omega0, nu0, n_draws=n_draws,
                                  seed=seed ^ idx)
        estimate[idx] = est
        se[idx] = err
    invertible = estimate + 2.0 * se < 0.0
    return RegionScan(phi_norm=phi_norm, k_norm=k_norm, estimate=estimate,
                      se=se, invertible=invertible, resolution=grid_resolution,
                      nu0=float(nu0), n_draws=int(n_draws), seed=int(seed))
