"""Forecasting, residual diagnostics and impulse responses.

Everything here is read-only with respect to estimation output: functions
take filter paths or residual matrices and return new objects.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import chi2

from .filtering import FilterOutput
from .params import ModelParams

__all__ = [
    "IrfResult",
    "forecast",
    "information_criteria",
    "local_projection_irf",
    "model_diagnostics",
    "newey_west",
    "portmanteau",
]


def forecast(params: ModelParams, mu_next: np.ndarray, horizon: int) -> np.ndarray:
    """Multi-step location forecasts from the one-step prediction.

    Row l (1-based) is omega + Phi^{l-1} (mu_next - omega): the score has
    conditional mean zero, so the location mean-reverts geometrically.  The
    first row is mu_next itself.
    """
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    mu_next = np.asarray(mu_next, dtype=float)
    out = np.empty((horizon, params.N))
    gap = mu_next - params.omega
    for l in range(horizon):
        out[l] = params.omega + gap
        gap = params.Phi @ gap
    return out


def portmanteau(resid: np.ndarray, m: int):
    """Multivariate serial-correlation test on a residual matrix.

    Q(m) = T^2 sum_{i=1..m} (T-i)^{-1} tr(G_i' G_0^{-1} G_i G_0^{-1}) with
    G_i the lag-i residual autocovariances; the null of no correlation up to
    lag m is chi-squared with N^2 m degrees of freedom.
    Returns (Q, df, p_value).
    """
    r = np.atleast_2d(np.asarray(resid, dtype=float))
    T, N = r.shape
    if m < 1:
        raise ValueError("need at least one lag")
    if T <= 5 * m:
        raise ValueError(f"need T > 5m observations, got T={T} for m={m}")
    c = r - r.mean(axis=0)
    G0 = c.T @ c / T
    cond = np.linalg.cond(G0)
    if not np.isfinite(cond) or cond > 1e12:
        raise ValueError("residual covariance is singular; test undefined")
    G0_inv = np.linalg.inv(G0)
    Q = 0.0
    for i in range(1, m + 1):
        Gi = c[i:].T @ c[:-i] / T
        Q += float(np.trace(Gi.T @ G0_inv @ Gi @ G0_inv)) / (T - i)
    Q *= T * T
    df = N * N * m
    return float(Q), int(df), float(chi2.sf(Q, df))


def information_criteria(loglik: float, p: int, T: int):
    """(aic, bic) = (2p - 2 loglik, p ln T - 2 loglik)."""
    if T <= 0:
        raise ValueError("T must be positive")
    return 2.0 * p - 2.0 * loglik, p * float(np.log(T)) - 2.0 * loglik


def newey_west(regressors: np.ndarray, residuals: np.ndarray,
               lag: int) -> np.ndarray:
    """HAC covariance of OLS coefficients with Bartlett weights.

    Sandwich (X'X)^{-1} S (X'X)^{-1} where S accumulates the score outer
    products down-weighted linearly up to `lag`; lag 0 reduces to the
    heteroskedasticity-only (White) covariance.
    """
    X = np.atleast_2d(np.asarray(regressors, dtype=float))
    e = np.asarray(residuals, dtype=float).ravel()
    T, k = X.shape
    if e.shape[0] != T:
        raise ValueError("residual length does not match regressor rows")
    if lag < 0:
        raise ValueError("lag must be nonnegative")
    if T <= k + lag:
        raise ValueError(f"need T > k + lag, got T={T}, k={k}, lag={lag}")
    xtx = X.T @ X
    if np.linalg.cond(xtx) > 1e12:
        raise ValueError("regressor matrix is rank deficient")
    g = X * e[:, None]  # per-observation scores
    S = g.T @ g
    for l in range(1, lag + 1):
        w = 1.0 - l / (lag + 1.0)
        Gl = g[l:].T @ g[:-l]
        S += w * (Gl + Gl.T)
    xtx_inv = np.linalg.inv(xtx)
    cov = xtx_inv @ S @ xtx_inv
    return 0.5 * (cov + cov.T)


@dataclass(frozen=True)
class IrfResult:
    """Local-projection impulse responses with HAC confidence bands.

    `response[i, j, h]` is the reaction of location component i to a unit
    shock in score component j after h steps; `lo`/`hi` are the 95% bands
    and `resid_std[i, h]` the projection residual spread.
    """

    horizons: np.ndarray
    response: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    resid_std: np.ndarray

    def to_frame(self):
        import pandas as pd

        n_resp, n_shock, H1 = self.response.shape
        rows = []
        for i in range(n_resp):
            for j in range(n_shock):
                for h in range(H1):
                    rows.append({"response": i + 1, "shock": j + 1,
                                 "horizon": h,
                                 "point": self.response[i, j, h],
                                 "lo": self.lo[i, j, h],
                                 "hi": self.hi[i, j, h]})
        return pd.DataFrame(rows)

    def to_csv(self, path) -> None:
        self.to_frame().to_csv(path, index=False)


def local_projection_irf(filter_out: FilterOutput, H: int,
                         lag_rule=None) -> IrfResult:
    """Impulse responses of the filtered location to score shocks.

    For each horizon h, regresses the location prediction h+1 steps ahead on
    an intercept and all score components at time t; the slope on shock j
    estimates the h-step response.  Bands use Newey-West standard errors
    with lag length lag_rule(h) (default: h).
    """
    u = filter_out.u
    mu = filter_out.mu
    T, N = u.shape
    if H < 0:
        raise ValueError("horizon must be nonnegative")
    if T <= H + 10 * N:
        raise ValueError(f"need T > H + 10N observations, got T={T}")
    if lag_rule is None:
        lag_rule = lambda h: h  # noqa: E731 - standard local-projection choice

    response = np.empty((N, N, H + 1))
    lo = np.empty_like(response)
    hi = np.empty_like(response)
    resid_std = np.empty((N, H + 1))
    for h in range(H + 1):
        rows = T - h
        X = np.column_stack([np.ones(rows), u[:rows]])
        dep = mu[h + 1:T + 1]  # prediction h+1 steps after each shock
        beta, *_ = np.linalg.lstsq(X, dep, rcond=None)
        resid = dep - X @ beta
        lag = int(lag_rule(h))
        for i in range(N):
            cov = newey_west(X, resid[:, i], lag)
            se = np.sqrt(np.diag(cov)[1:])
            response[i, :, h] = beta[1:, i]
            lo[i, :, h] = beta[1:, i] - 1.96 * se
            hi[i, :, h] = beta[1:, i] + 1.96 * se
            resid_std[i, h] = resid[:, i].std(ddof=X.shape[1])
    return IrfResult(horizons=np.arange(H + 1), response=response, lo=lo,
                     hi=hi, resid_std=resid_std)


def model_diagnostics(filter_out: FilterOutput, n_params: int, m: int = 5,
                      resid_kind: str = "score") -> dict:
    """Post-fit summary: serial-correlation test plus information criteria.

    `resid_kind` picks the residual fed to the portmanteau statistic:
    "score" (the martingale-difference u_t, default), "innovation" (v_t) or
    "standardized" (Cholesky-whitened v_t).
    """
    series = {"score": filter_out.u, "innovation": filter_out.v,
              "standardized": filter_out.std_resid}
    if resid_kind not in series:
        raise ValueError(f"unknown resid_kind {resid_kind!r}")
    T = filter_out.v.shape[0]
    Q, df, p = portmanteau(series[resid_kind], m)
    aic, bic = information_criteria(filter_out.loglik, n_params, T)
    return {"portmanteau": {"Q": Q, "df": df, "p_value": p, "lags": m,
                            "residual": resid_kind},
            "loglik": float(filter_out.loglik),
            "aic": float(aic), "bic": float(bic), "n_params": int(n_params),
            "n_obs": int(T)}
