"""Maximum likelihood by Fisher scoring, with initialization helpers.

The update is theta' = theta + I^{-1} s, with the analytic score and the
conditional information recomputed at every iterate (true scoring, no
quasi-Newton caching; the parameter count stays small at intended scales).
Steps that leave the admissible set, produce a non-finite likelihood, or
decrease the likelihood are halved until they behave.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .deriv import conditional_information, filter_with_derivatives
from .filtering import filter_pass
from .params import (
    ModelParams,
    active_indices,
    pack,
    theta_labels,
    unpack,
    validate,
)

__all__ = [
    "EstimationError",
    "EstimationResult",
    "empirical_invertibility",
    "fisher_scoring",
    "fit",
    "init_gaussian_qml",
    "init_nu",
    "nu_from_kurtosis",
    "standard_errors",
]

MAX_HALVINGS = 30
COND_LIMIT = 1e12
LOGLIK_SLACK = 1e-8  # largest decrease an accepted step may inflict


class EstimationError(RuntimeError):
    """Scoring could not continue; `.result` holds the best iterate so far."""

    def __init__(self, message: str, result: "EstimationResult | None" = None):
        super().__init__(message)
        self.result = result


@dataclass
class EstimationResult:
    """Outcome of a Fisher-scoring run.

    `theta` is the free coordinate vector (the nu slot is absent in
    Gaussian mode), aligned with `std_err`, `info` and `labels`.
    """

    params: ModelParams
    theta: np.ndarray
    loglik: float
    info: np.ndarray
    std_err: np.ndarray
    info_pd: bool
    iterations: int
    converged: bool
    step_halvings: int
    trace: list
    n_obs: int
    gaussian: bool = False

    @property
    def labels(self) -> list:
        labels = theta_labels(self.params.N)
        return labels[1:] if self.gaussian else labels

    @property
    def n_params(self) -> int:
        return int(self.theta.size)

    @property
    def aic(self) -> float:
        return 2.0 * self.n_params - 2.0 * self.loglik

    @property
    def bic(self) -> float:
        return self.n_params * float(np.log(self.n_obs)) - 2.0 * self.loglik

    def to_json_dict(self) -> dict:
        return {
            "theta": self.params.to_json_dict(),
            "labels": self.labels,
            "theta_packed": self.theta.tolist(),
            "std_err": self.std_err.tolist(),
            "loglik": float(self.loglik),
            "aic": float(self.aic),
            "bic": float(self.bic),
            "n_obs": int(self.n_obs),
            "converged": bool(self.converged),
            "iterations": int(self.iterations),
            "step_halvings": int(self.step_halvings),
            "info_pd": bool(self.info_pd),
            "trace": self.trace,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2)


def standard_errors(info: np.ndarray) -> np.ndarray:
    """Square roots of the diagonal of the inverse information.

    The information passed in is already the sum over observations, so no
    further sample-size scaling is applied here.
    """
    info = np.asarray(info, dtype=float)
    try:
        np.linalg.cholesky(info)
    except np.linalg.LinAlgError as exc:
        raise ValueError("information matrix is not positive definite") from exc
    return np.sqrt(np.diag(np.linalg.inv(info)))


def empirical_invertibility(params: ModelParams, y: np.ndarray,
                            delta_margin: float = 0.0):
    """Average log spectral norm of the filter's state-transition Jacobian.

    Returns (value, feasible) with value = (1/T) sum_t log ||Phi + K C_t||_2,
    where C_t is the Jacobian of the robust score in the innovation, taken
    along the filtered path.  Feasible means value < -delta_margin.  With
    K = 0 the value collapses to log ||Phi||_2 exactly.
    """
    y = np.atleast_2d(np.asarray(y, dtype=float))
    N = params.N
    filt = filter_pass(params, y)
    Phi, K = params.Phi, params.K
    eye = np.eye(N)
    if params.gaussian or np.isinf(params.nu):
        # unit weights: the Jacobian is the constant Phi - K
        value = float(np.log(np.linalg.norm(Phi - K, 2)))
        return value, bool(value < -delta_margin)
    A = np.linalg.inv(params.Omega)
    total = 0.0
    for t in range(y.shape[0]):
        v = filt.v[t]
        s = 1.0 / filt.w[t]
        C = (2.0 * s * s / params.nu) * np.outer(v, v) @ A - s * eye
        total += np.log(np.linalg.norm(Phi + K @ C, 2))
    value = float(total / y.shape[0])
    return value, bool(value < -delta_margin)


def _admissible_for_step(params: ModelParams) -> bool:
    # step guard: nu > 0, scale PD, stable autoregression; a singular K is
    # left alone (the filter is well defined there and iid fits live nearby)
    report = validate(params)
    return report.nu_positive and report.omega_pd and report.phi_stationary


def fisher_scoring(y: np.ndarray, start: ModelParams, delta: float = 1e-6,
                   max_iter: int = 200, enforce_invertibility: bool = False,
                   invertibility_margin: float = 0.0,
                   mu_init=None) -> EstimationResult:
    """Iterate theta' = theta + I^{-1} s until the relative step is below delta.

    Proposed steps are halved (at most ``MAX_HALVINGS`` times per iteration)
    until the iterate is admissible, the log-likelihood is finite and has not
    dropped by more than ``LOGLIK_SLACK``, and — when requested — the
    empirical invertibility estimate stays below ``-invertibility_margin``.
    An ill-conditioned information matrix (condition number above 1e12)
    aborts with :class:`EstimationError` carrying the best iterate so far.
    Returns the best-likelihood iterate visited.
    """
    y = np.atleast_2d(np.asarray(y, dtype=float))
    N = start.N
    if y.shape[1] != N:
        raise ValueError(f"series has {y.shape[1]} columns, start has N={N}")
    gaussian = start.gaussian or np.isinf(start.nu)
    free = active_indices(N, gaussian=gaussian)

    if not _admissible_for_step(start):
        raise ValueError(f"starting parameters not admissible: {validate(start)}")

    theta_full = np.array(pack(start).values, dtype=float)
    params = start
    paths = filter_with_derivatives(params, y, mu_init=mu_init)
    loglik = paths.filt.loglik
    if not np.isfinite(loglik):
        raise ValueError("log-likelihood not finite at the starting value")

    best_theta = theta_full.copy()
    best_loglik = loglik
    trace: list = []
    total_halvings = 0
    converged = False
    iterations = 0

    def _result_at(theta_vec, n_iter, conv):
        p = unpack(theta_vec, N, gaussian=gaussian)
        final_paths = filter_with_derivatives(p, y, mu_init=mu_init)
        info = conditional_information(p, y, paths=final_paths)
        try:
            se = standard_errors(info)
            pd_flag = True
        except ValueError:
            se = np.full(free.size, np.nan)
            pd_flag = False
        return EstimationResult(
            params=p, theta=theta_vec[free].copy(), loglik=final_paths.filt.loglik,
            info=info, std_err=se, info_pd=pd_flag, iterations=n_iter,
            converged=conv, step_halvings=total_halvings, trace=trace,
            n_obs=y.shape[0], gaussian=gaussian,
        )

    for iterations in range(1, max_iter + 1):
        info = conditional_information(params, y, paths=paths)
        cond = np.linalg.cond(info)
        if not np.isfinite(cond) or cond > COND_LIMIT:
            raise EstimationError(
                f"information matrix is ill-conditioned (cond={cond:.3e}) "
                f"at iteration {iterations}",
                result=_result_at(best_theta, iterations - 1, False),
            )
        step = np.linalg.solve(info, paths.score)

        accepted = False
        halvings = 0
        for halvings in range(MAX_HALVINGS + 1):
            candidate = theta_full.copy()
            candidate[free] = theta_full[free] + step / (2.0 ** halvings)
            try:
                cand_params = unpack(candidate, N, gaussian=gaussian)
            except ValueError:
                continue
            if not _admissible_for_step(cand_params):
                continue
            cand_loglik = filter_pass(cand_params, y, mu_init=mu_init).loglik
            if not np.isfinite(cand_loglik) or cand_loglik < loglik - LOGLIK_SLACK:
                continue
            if enforce_invertibility:
                _, feasible = empirical_invertibility(cand_params, y,
                                                      invertibility_margin)
                if not feasible:
                    continue
            accepted = True
            break
        total_halvings += halvings

        if not accepted:
            trace.append({"iteration": iterations, "loglik": float(loglik),
                          "rel_step": float("nan"), "halvings": halvings,
                          "note": "no acceptable step"})
            break

        delta_vec = candidate[free] - theta_full[free]
        rel_step = float(np.linalg.norm(delta_vec)
                         / max(np.linalg.norm(theta_full[free]), 1e-300))
        theta_full = candidate
        params = cand_params
        paths = filter_with_derivatives(params, y, mu_init=mu_init)
        loglik = paths.filt.loglik
        if loglik > best_loglik:
            best_loglik = loglik
            best_theta = theta_full.copy()
        trace.append({"iteration": iterations, "loglik": float(loglik),
                      "rel_step": rel_step, "halvings": halvings})
        if rel_step < delta:
            converged = True
            break

    return _result_at(best_theta, iterations, converged)


def init_gaussian_qml(y: np.ndarray, delta: float = 1e-5,
                      max_iter: int = 100) -> ModelParams:
    """Gaussian quasi-ML starting values for the location dynamics.

    Runs Gaussian-mode scoring from moment starts (omega = sample mean,
    Omega = sample covariance, Phi = 0.8 I, K = 0.5 I).  If the fit cannot
    be completed the moment starts themselves are returned.
    """
    y = np.atleast_2d(np.asarray(y, dtype=float))
    T, N = y.shape
    if T < 10 * N:
        raise ValueError(f"need at least {10 * N} observations for N={N}, got {T}")
    cov = np.atleast_2d(np.cov(y, rowvar=False))
    start = ModelParams(nu=np.inf, omega=y.mean(axis=0), Omega=cov,
                        Phi=0.8 * np.eye(N), K=0.5 * np.eye(N), gaussian=True)
    try:
        result = fisher_scoring(y, start, delta=delta, max_iter=max_iter)
        return result.params
    except (EstimationError, ValueError, np.linalg.LinAlgError):
        return start


def nu_from_kurtosis(kurt: float) -> float:
    """Invert the marginal excess kurtosis 6/(nu - 4) for the tail parameter.

    Non-positive kurtosis estimates fall back to 100 (an effectively
    Gaussian start); the result is clamped to [4.5, 200].
    """
    if kurt <= 0.0:
        return 100.0
    return float(np.clip((4.0 * kurt + 6.0) / kurt, 4.5, 200.0))


def init_nu(std_resid: np.ndarray) -> float:
    """Tail-parameter starting value from standardized residuals.

    Averages the marginal excess kurtosis across series and inverts the
    t kurtosis formula via :func:`nu_from_kurtosis`.
    """
    from scipy.stats import kurtosis

    r = np.atleast_2d(np.asarray(std_resid, dtype=float))
    if r.shape[0] < 30:
        raise ValueError(f"need at least 30 residuals, got {r.shape[0]}")
    kurt = float(np.mean(kurtosis(r, axis=0, fisher=True, bias=True)))
    return nu_from_kurtosis(kurt)


def fit(y: np.ndarray, nu0: float | None = None, gaussian: bool = False,
        delta: float = 1e-6, max_iter: int = 200,
        enforce_invertibility: bool = False) -> EstimationResult:
    """Full estimation pipeline: Gaussian QML starts, tail init, scoring.

    With ``gaussian`` set the Gaussian-mode fit is polished to ``delta`` and
    returned.  Otherwise the tail parameter starts at ``nu0`` when given, or
    at the kurtosis-matched value from the QML residuals, and the QML scale
    start is shrunk by (nu0 - 2)/nu0 so it targets the scale matrix rather
    than the covariance.
    """
    y = np.atleast_2d(np.asarray(y, dtype=float))
    qml = init_gaussian_qml(y)
    if gaussian:
        return fisher_scoring(y, qml, delta=delta, max_iter=max_iter,
                              enforce_invertibility=enforce_invertibility)
    if nu0 is None:
        nu0 = init_nu(filter_pass(qml, y).std_resid)
    scale = (nu0 - 2.0) / nu0 if nu0 > 2.0 else 1.0
    start = ModelParams(nu=nu0, omega=qml.omega, Omega=scale * qml.Omega,
                        Phi=qml.Phi, K=qml.K)
    return fisher_scoring(y, start, delta=delta, max_iter=max_iter,
                          enforce_invertibility=enforce_invertibility)
