"""Analytic first derivatives of the filter and the log-likelihood.

The predicted location depends on the full parameter vector through the
recursion, so likelihood derivatives need the sensitivity paths
d mu_{t|t-1} / d theta'.  These follow their own linear recursions driven
by the filtered quantities:

    M_{t+1} = X_t M_t + F_t,     X_t = Phi + K C_t,

with M_t the N x p sensitivity matrix, C_t the Jacobian of the robust
score with respect to the predicted location, and F_t collecting the
explicit partials of the update for each parameter block.  The recursion
starts at M_1 = 0: the filter's initial location is treated as a fixed
constant, not a function of theta.

All derivatives are with respect to the packed ordering of params.pack:
(nu, vech(Omega), omega, vec(Phi), vec(K)).  In Gaussian mode the nu
coordinate is absent and every array here shrinks by one column.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cholesky, solve_triangular
from scipy.special import digamma, polygamma

from .filtering import FilterOutput, _t_const
from .params import ModelParams, block_slices, duplication_matrix, theta_dim, validate

__all__ = [
    "ScorePartials",
    "UJacobians",
    "DerivPaths",
    "score_partials",
    "u_jacobians",
    "filter_with_derivatives",
    "analytic_score",
    "information_static",
    "conditional_information",
    "opg_matrix",
]


@dataclass(frozen=True)
class ScorePartials:
    """Partials of one observation's log-density, holding the location fixed.

    alpha    : scalar, d ell / d nu
    beta     : (q,),   d ell / d vech(Omega)
    varsigma : (N,),   d ell / d mu (equivalently minus d ell / d v)
    """

    alpha: float
    beta: np.ndarray
    varsigma: np.ndarray


@dataclass(frozen=True)
class UJacobians:
    """Jacobians of the robust score u = v / w for one innovation.

    a : (N,)     d u / d nu
    B : (N, q)   d u / d vech(Omega)'
    C : (N, N)   d u / d mu'   (note d u / d v' = -C)
    E : (N, N^2) d (K u) / d vec(K)' holding u fixed, i.e. u' kron I_N
    """

    a: np.ndarray
    B: np.ndarray
    C: np.ndarray
    E: np.ndarray


@dataclass
class DerivPaths:
    """Filter output together with its first-order sensitivity paths.

    dmu[t] is d mu_{t|t-1} / d theta' (N x p); row T is the sensitivity of
    the out-of-sample prediction.  dell[t] is the full derivative of ell_t,
    explicit partials plus the varsigma' dmu propagation term.
    """

    filt: FilterOutput
    dmu: np.ndarray
    dell: np.ndarray
    score: np.ndarray
    gaussian: bool


def score_partials(v: np.ndarray, Omega: np.ndarray, nu: float) -> ScorePartials:
    """Partial derivatives of the t log-density at innovation v.

    Gaussian mode (nu = inf) sets alpha to 0.0 and uses the normal-density
    partials for beta and varsigma.
    """
    v = np.asarray(v, dtype=float)
    N = v.shape[0]
    Omega = np.asarray(Omega, dtype=float)
    A = np.linalg.inv(Omega)
    Pv = A @ v
    D = duplication_matrix(N)
    if np.isinf(nu):
        beta = 0.5 * D.T @ (np.kron(Pv, Pv) - A.flatten(order="F"))
        return ScorePartials(alpha=0.0, beta=beta, varsigma=Pv.copy())
    q = float(v @ Pv)
    w = 1.0 + q / nu
    b = 1.0 - 1.0 / w
    alpha = 0.5 * (digamma((nu + N) / 2.0) - digamma(nu / 2.0) - N / nu
                   + (nu + N) / nu * b - np.log(w))
    coef = (nu + N) / (nu * w)
    beta = 0.5 * D.T @ (coef * np.kron(Pv, Pv) - A.flatten(order="F"))
    varsigma = coef * Pv
    return ScorePartials(alpha=float(alpha), beta=beta, varsigma=varsigma)


def u_jacobians(v: np.ndarray, Omega: np.ndarray, nu: float) -> UJacobians:
    """Jacobians of the robust score at innovation v.

    At v = 0 these collapse to a = 0, B = 0, C = -I, E = 0.
    """
    v = np.asarray(v, dtype=float)
    N = v.shape[0]
    Omega = np.asarray(Omega, dtype=float)
    A = np.linalg.inv(Omega)
    D = duplication_matrix(N)
    I = np.eye(N)
    if np.isinf(nu):
        E = np.kron(v[None, :], I)
        return UJacobians(a=np.zeros(N), B=np.zeros((N, N * (N + 1) // 2)),
                          C=-I, E=E)
    Pv = A @ v
    w = 1.0 + float(v @ Pv) / nu
    b = 1.0 - 1.0 / w
    s = 1.0 - b  # = 1/w
    u = s * v
    a = v * (b * s / nu)
    B = (s * s / nu) * np.outer(v, np.kron(Pv, Pv)) @ D
    C = (2.0 * s * s / nu) * np.outer(v, v) @ A - s * I
    E = np.kron(u[None, :], I)
    return UJacobians(a=a, B=B, C=C, E=E)


def filter_with_derivatives(params: ModelParams, y: np.ndarray,
                            mu_init=None) -> DerivPaths:
    """Single pass computing the filter and all first-derivative paths.

    The sensitivity states for every parameter block are packed into one
    N x p matrix and advanced with a single matrix product per step.
    """
    y = np.atleast_2d(np.asarray(y, dtype=float))
    N = params.N
    if y.shape[1] != N:
        raise ValueError(f"series has {y.shape[1]} columns, params have N={N}")
    if not np.all(np.isfinite(y)):
        raise ValueError("series contains NaN or infinite entries")
    report = validate(params)
    if not (report.nu_positive and report.omega_pd):
        raise ValueError(f"parameters not admissible: {report}")

    gaussian = params.gaussian or np.isinf(params.nu)
    nu = np.inf if gaussian else params.nu
    omega, Phi, K = params.omega, params.Phi, params.K
    T = y.shape[0]
    q = N * (N + 1) // 2
    p_full = theta_dim(N)
    p = p_full - 1 if gaussian else p_full
    off = 0 if gaussian else 1  # column offset: nu occupies slot 0 when present
    sl_vech = slice(off, off + q)
    sl_om = slice(off + q, off + q + N)
    sl_phi = slice(off + q + N, off + q + N + N * N)
    sl_k = slice(off + q + N + N * N, off + q + N + 2 * N * N)

    L = cholesky(params.Omega, lower=True)
    half_logdet = float(np.sum(np.log(np.diag(L))))
    Ainv = solve_triangular(L, np.eye(N), lower=True)
    A = Ainv.T @ Ainv
    vecA = A.flatten(order="F")
    D = duplication_matrix(N)
    I = np.eye(N)
    ImPhi = I - Phi

    if gaussian:
        const = -0.5 * N * np.log(2.0 * np.pi) - half_logdet
    else:
        const = _t_const(nu, N) - half_logdet
        dig = 0.5 * (digamma((nu + N) / 2.0) - digamma(nu / 2.0) - N / nu)

    mu = np.empty((T + 1, N))
    v = np.empty((T, N))
    u = np.empty((T, N))
    w = np.empty(T)
    bb = np.empty(T)
    ell = np.empty(T)
    dmu = np.empty((T + 1, N, p))
    dell = np.empty((T, p))

    mu_t = np.array(omega if mu_init is None else mu_init, dtype=float)
    M = np.zeros((N, p))
    for t in range(T):
        mu[t] = mu_t
        dmu[t] = M
        v_t = y[t] - mu_t
        v[t] = v_t
        Pv = A @ v_t
        qf = float(v_t @ Pv)

        if gaussian:
            w_t, b_t = 1.0, 0.0
            u_t = v_t
            ell[t] = const - 0.5 * qf
            varsig = Pv
            beta = 0.5 * D.T @ (np.kron(Pv, Pv) - vecA)
            C = -I
            a = None
            B = None
        else:
            w_t = 1.0 + qf / nu
            b_t = 1.0 - 1.0 / w_t
            s = 1.0 / w_t
            u_t = s * v_t
            ell[t] = const - 0.5 * (nu + N) * np.log(w_t)
            coef = (nu + N) / (nu * w_t)
            varsig = coef * Pv
            beta = 0.5 * D.T @ (coef * np.kron(Pv, Pv) - vecA)
            alpha = dig + 0.5 * ((nu + N) / nu * b_t - np.log(w_t))
            a = v_t * (b_t * s / nu)
            B = (s * s / nu) * np.outer(v_t, np.kron(Pv, Pv)) @ D
            C = (2.0 * s * s / nu) * np.outer(v_t, v_t) @ A - s * I
        w[t], bb[t] = w_t, b_t
        u[t] = u_t

        # full derivative of ell_t: explicit partials plus propagation
        row = varsig @ M
        row[sl_vech] += beta
        if not gaussian:
            row[0] += alpha
        dell[t] = row

        # advance location and sensitivities
        X = Phi + K @ C
        F = np.zeros((N, p))
        if not gaussian:
            F[:, 0] = K @ a
            F[:, sl_vech] = K @ B
        F[:, sl_om] = ImPhi
        F[:, sl_phi] = np.kron((mu_t - omega)[None, :], I)
        F[:, sl_k] = np.kron(u_t[None, :], I)
        M = X @ M + F
        mu_t = omega + Phi @ (mu_t - omega) + K @ u_t
    mu[T] = mu_t
    dmu[T] = M

    std_resid = solve_triangular(L, v.T, lower=True).T
    filt = FilterOutput(mu=mu, v=v, u=u, w=w, b=bb, ell=ell,
                        loglik=float(ell.sum()), std_resid=std_resid)
    return DerivPaths(filt=filt, dmu=dmu, dell=dell,
                      score=dell.sum(axis=0), gaussian=gaussian)


def analytic_score(params: ModelParams, y: np.ndarray, mu_init=None) -> np.ndarray:
    """Gradient of the total log-likelihood in the packed parameterization."""
    return filter_with_derivatives(params, y, mu_init=mu_init).score


def information_static(params: ModelParams):
    """Per-observation information blocks that do not involve the location path.

    Returns (S, I_mu): S is p x p with the (nu, vech Omega) corner filled
    and zeros elsewhere; I_mu is the N x N information of the location.
    Cross terms between (nu, vech Omega) and the location vanish because
    the corresponding score products are odd in the innovation.
    """
    N = params.N
    A = np.linalg.inv(params.Omega)
    D = duplication_matrix(N)
    gaussian = params.gaussian or np.isinf(params.nu)
    q = N * (N + 1) // 2
    if gaussian:
        p = theta_dim(N) - 1
        S = np.zeros((p, p))
        S[:q, :q] = 0.5 * D.T @ np.kron(A, A) @ D
        return S, A
    nu = params.nu
    dof = nu + N
    I_nu = 0.25 * (polygamma(1, nu / 2.0) - polygamma(1, dof / 2.0)
                   - 2.0 * N * (dof + 4.0) / (nu * dof * (dof + 2.0)))
    vecA = A.flatten(order="F")
    I_nu_Om = -(1.0 / (dof * (dof + 2.0))) * (D.T @ vecA)
    I_Om = (dof / (2.0 * (dof + 2.0))) * (D.T @ np.kron(A, A) @ D) \
        - (1.0 / (2.0 * (dof + 2.0))) * np.outer(D.T @ vecA, D.T @ vecA)
    I_mu = (dof / (dof + 2.0)) * A
    p = theta_dim(N)
    S = np.zeros((p, p))
    S[0, 0] = I_nu
    S[0, 1:1 + q] = I_nu_Om
    S[1:1 + q, 0] = I_nu_Om
    S[1:1 + q, 1:1 + q] = I_Om
    return S, I_mu


def conditional_information(params: ModelParams, y: np.ndarray, mu_init=None,
                            paths: DerivPaths | None = None) -> np.ndarray:
    """Conditional Fisher information of the sample, summed over observations.

    I_T = sum_t { S_static + M_t' I_mu M_t } with M_t the location
    sensitivity at time t.  The result is symmetrized to absorb rounding.
    """
    if paths is None:
        paths = filter_with_derivatives(params, y, mu_init=mu_init)
    S, I_mu = information_static(params)
    T = paths.filt.v.shape[0]
    M = paths.dmu[:T]
    info = T * S + np.einsum("tia,ij,tjb->ab", M, I_mu, M, optimize=True)
    return 0.5 * (info + info.T)


def opg_matrix(paths: DerivPaths) -> np.ndarray:
    """Outer-product-of-gradients estimate: sum_t dell_t dell_t'."""
    return paths.dell.T @ paths.dell
