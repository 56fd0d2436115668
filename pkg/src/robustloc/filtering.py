"""Robust location filter for heavy-tailed multivariate series.

Observations follow y_t = mu_{t|t-1} + v_t with v_t conditionally
multivariate Student-t(nu, 0, Omega).  The predicted location follows

    mu_{t+1|t} - omega = Phi (mu_{t|t-1} - omega) + K u_t,

where u_t = v_t / w_t and w_t = 1 + v_t' Omega^{-1} v_t / nu.  Large
innovations are automatically downweighted: ||u_t|| is uniformly bounded,
so a single outlier cannot destabilize the location path.  As nu -> inf
the weight tends to one and the recursion becomes the steady-state
innovations form of the linear Gaussian model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cholesky, solve_triangular
from scipy.special import betaln, gammaln

from .params import ModelParams, validate

__all__ = [
    "ScoreTriple",
    "FilterOutput",
    "score_weight",
    "score_bound",
    "loglik_obs",
    "filter_pass",
    "gaussian_filter_pass",
    "u_moment",
    "u_covariance",
]


@dataclass(frozen=True)
class ScoreTriple:
    """Robust score u = v/w with its weight w >= 1 and b = 1 - 1/w in [0, 1)."""

    u: np.ndarray
    w: float
    b: float


@dataclass
class FilterOutput:
    """Per-time paths produced by one filter pass.

    mu has T+1 rows: the predicted locations mu_{t|t-1} for t = 1..T plus the
    one-step-ahead prediction mu_{T+1|T} in the last row.  std_resid holds
    L^{-1} v_t with L the lower Cholesky factor of Omega.
    """

    mu: np.ndarray
    v: np.ndarray
    u: np.ndarray
    w: np.ndarray
    b: np.ndarray
    ell: np.ndarray
    loglik: float
    std_resid: np.ndarray

    @property
    def mu_next(self) -> np.ndarray:
        """The out-of-sample prediction mu_{T+1|T}."""
        return self.mu[-1]

    def to_frame(self):
        """Tabular view (one row per observation) for CSV export."""
        import pandas as pd

        T, N = self.v.shape
        data = {"t": np.arange(1, T + 1)}
        for j in range(N):
            data[f"mu_{j + 1}"] = self.mu[:T, j]
        for j in range(N):
            data[f"v_{j + 1}"] = self.v[:, j]
        for j in range(N):
            data[f"u_{j + 1}"] = self.u[:, j]
        data["w"] = self.w
        data["b"] = self.b
        data["ell"] = self.ell
        return pd.DataFrame(data)

    def to_csv(self, path) -> None:
        self.to_frame().to_csv(path, index=False)


def score_weight(v: np.ndarray, Omega_inv: np.ndarray, nu: float) -> ScoreTriple:
    """Robust score triple (u, w, b) for one innovation.

    Parameters
    ----------
    v : (N,) innovation vector
    Omega_inv : (N, N) precision matrix
    nu : degrees of freedom; np.inf selects the Gaussian limit (u = v)

    Returns
    -------
    ScoreTriple with w = 1 + v'Omega_inv v / nu, b = 1 - 1/w, u = v/w.
    """
    v = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(v)):
        raise ValueError("innovation contains non-finite entries")
    if np.isinf(nu):
        return ScoreTriple(u=v.copy(), w=1.0, b=0.0)
    if not (nu > 0):
        raise ValueError(f"nu must be positive, got {nu}")
    q = float(v @ Omega_inv @ v)
    w = 1.0 + q / nu
    return ScoreTriple(u=v / w, w=w, b=1.0 - 1.0 / w)


def score_bound(nu: float, Omega: np.ndarray) -> float:
    """Uniform bound on ||u_t||: half the square root of nu * lambda_max(Omega)."""
    lam_max = float(np.max(np.linalg.eigvalsh(Omega)))
    return 0.5 * np.sqrt(nu * lam_max)


def _t_const(nu: float, N: int) -> float:
    return gammaln((nu + N) / 2.0) - gammaln(nu / 2.0) - 0.5 * N * np.log(nu * np.pi)


def loglik_obs(v: np.ndarray, Omega: np.ndarray, nu: float) -> float:
    """Log-density of one innovation under the Student-t (or Gaussian) law.

    nu = np.inf gives the multivariate normal log-density with covariance
    Omega; otherwise the multivariate t with scale Omega.
    """
    v = np.asarray(v, dtype=float)
    N = v.shape[0]
    L = cholesky(np.asarray(Omega, dtype=float), lower=True)
    half_logdet = float(np.sum(np.log(np.diag(L))))
    z = solve_triangular(L, v, lower=True)
    q = float(z @ z)
    if np.isinf(nu):
        return -0.5 * N * np.log(2.0 * np.pi) - half_logdet - 0.5 * q
    w = 1.0 + q / nu
    return _t_const(nu, N) - half_logdet - 0.5 * (nu + N) * np.log(w)


def filter_pass(params: ModelParams, y: np.ndarray, mu_init=None) -> FilterOutput:
    """Run the location filter over a T x N series.

    The filter starts at mu_{1|0} = mu_init if given, else omega.  The pass
    is fully deterministic; the precision matrix comes from one Cholesky
    factorization of Omega.

    Raises
    ------
    ValueError on non-admissible parameters or non-finite data.
    """
    y = np.atleast_2d(np.asarray(y, dtype=float))
    if y.shape[1] != params.N:
        raise ValueError(f"series has {y.shape[1]} columns, params have N={params.N}")
    if not np.all(np.isfinite(y)):
        raise ValueError("series contains NaN or infinite entries")
    report = validate(params)
    if not (report.nu_positive and report.omega_pd):
        raise ValueError(f"parameters not admissible for filtering: {report}")
    T, N = y.shape
    nu = np.inf if params.gaussian else params.nu
    omega, Phi, K = params.omega, params.Phi, params.K

    L = cholesky(params.Omega, lower=True)
    half_logdet = float(np.sum(np.log(np.diag(L))))
    Ainv = solve_triangular(L, np.eye(N), lower=True)
    A = Ainv.T @ Ainv  # Omega^{-1}

    gaussian = np.isinf(nu)
    if gaussian:
        const = -0.5 * N * np.log(2.0 * np.pi) - half_logdet
    else:
        const = _t_const(nu, N) - half_logdet

    mu = np.empty((T + 1, N))
    v = np.empty((T, N))
    u = np.empty((T, N))
    w = np.empty(T)
    b = np.empty(T)
    ell = np.empty(T)

    mu_t = np.array(omega if mu_init is None else mu_init, dtype=float)
    for t in range(T):
        mu[t] = mu_t
        v_t = y[t] - mu_t
        v[t] = v_t
        if gaussian:
            q = float(v_t @ A @ v_t)
            w[t] = 1.0
            b[t] = 0.0
            u[t] = v_t
            ell[t] = const - 0.5 * q
        else:
            q = float(v_t @ A @ v_t)
            w_t = 1.0 + q / nu
            w[t] = w_t
            b[t] = 1.0 - 1.0 / w_t
            u[t] = v_t / w_t
            ell[t] = const - 0.5 * (nu + N) * np.log(w_t)
        mu_t = omega + Phi @ (mu_t - omega) + K @ u[t]
    mu[T] = mu_t

    std_resid = solve_triangular(L, v.T, lower=True).T
    return FilterOutput(mu=mu, v=v, u=u, w=w, b=b, ell=ell,
                        loglik=float(ell.sum()), std_resid=std_resid)


def gaussian_filter_pass(params: ModelParams, y: np.ndarray, mu_init=None) -> FilterOutput:
    """Filter pass in the exact Gaussian limit (u_t = v_t, Gaussian ell_t)."""
    if not params.gaussian:
        params = ModelParams(nu=np.inf, omega=params.omega, Omega=params.Omega,
                             Phi=params.Phi, K=params.K, gaussian=True)
    return filter_pass(params, y, mu_init=mu_init)


def u_moment(nu: float, N: int, c: float, s: int) -> float:
    """Exact even moment E||u_t||^{2s} for the isotropic scale Omega = c * I_N.

    Uses the Beta representation of the squared-weight variable: the value is
    (nu c)^s * B((N+2s)/2, (nu+2s)/2) / B(N/2, nu/2), evaluated with
    log-gamma arithmetic so large nu does not overflow.
    """
    if not (nu > 0 and np.isfinite(nu)):
        raise ValueError("nu must be positive and finite")
    if not (c > 0):
        raise ValueError("c must be positive")
    if not (isinstance(s, (int, np.integer)) and s >= 1):
        raise ValueError("s must be a positive integer")
    log_val = s * np.log(nu * c) + betaln((N + 2 * s) / 2.0, (nu + 2 * s) / 2.0) \
        - betaln(N / 2.0, nu / 2.0)
    return float(np.exp(log_val))


def u_covariance(nu: float, N: int, Omega: np.ndarray) -> np.ndarray:
    """Unconditional covariance of u_t: nu^2 / ((nu+N)(nu+N+2)) * Omega."""
    if not (nu > 0):
        raise ValueError("nu must be positive")
    Omega = np.asarray(Omega, dtype=float)
    if np.isinf(nu):
        return Omega.copy()
    coef = nu ** 2 / ((nu + N) * (nu + N + 2))
    return coef * Omega
