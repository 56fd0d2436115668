"""Data generation for the heavy-tailed location model and the MC harness.

Replications are seeded individually (base seed + replication index), so a
study is reproducible bit for bit no matter how many workers run it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from joblib import Parallel, delayed

from .estimate import EstimationError, fit
from .params import ModelParams, active_indices, pack, theta_labels, validate

__all__ = [
    "McReport",
    "SimOutput",
    "draw_standard_t",
    "mc_study",
    "simulate",
]


def draw_standard_t(nu: float, N: int, rng) -> np.ndarray:
    """One standard multivariate-t vector via z * sqrt(nu / chi2).

    The Gaussian limit (nu = inf) returns the normal vector itself.
    """
    z = rng.standard_normal(N)
    if np.isinf(nu):
        return z
    g = rng.chisquare(nu) / nu
    return z / np.sqrt(g)


@dataclass(frozen=True)
class SimOutput:
    """Simulated observations with the true location path that generated them."""

    y: np.ndarray
    mu_true: np.ndarray
    seed: int
    burn_in: int

    def to_frame(self):
        import pandas as pd

        T, N = self.y.shape
        data = {"t": np.arange(1, T + 1)}
        for j in range(N):
            data[f"y_{j + 1}"] = self.y[:, j]
        for j in range(N):
            data[f"mu_{j + 1}"] = self.mu_true[:, j]
        return pd.DataFrame(data)

    def to_csv(self, path) -> None:
        self.to_frame().to_csv(path, index=False)


def simulate(params0: ModelParams, T: int, burn_in: int = 1000,
             seed: int = 0) -> SimOutput:
    """Generate T observations after a burn-in started at the mean location.

    Each step draws a standard-t innovation, scales it by the Cholesky root
    of the scale matrix, and advances the location with the same robust-score
    update the filter uses.
    """
    report = validate(params0)
    if not (report.nu_positive and report.omega_pd and report.phi_stationary):
        raise ValueError(f"parameters not admissible for simulation: {report}")
    if T < 1:
        raise ValueError("T must be positive")
    N = params0.N
    gaussian = params0.gaussian or np.isinf(params0.nu)
    nu = np.inf if gaussian else params0.nu
    omega, Phi, K = params0.omega, params0.Phi, params0.K
    L = np.linalg.cholesky(params0.Omega)

    rng = np.random.default_rng(seed)
    y = np.empty((T, N))
    mu_true = np.empty((T, N))
    mu = omega.copy()
    for t in range(-burn_in, T):
        eps = draw_standard_t(nu, N, rng)
        v = L @ eps
        if t >= 0:
            mu_true[t] = mu
            y[t] = mu + v
        # eps' eps equals the scale-weighted quadratic form of v exactly
        w = 1.0 if gaussian else 1.0 + float(eps @ eps) / nu
        mu = omega + Phi @ (mu - omega) + K @ (v / w)
    return SimOutput(y=y, mu_true=mu_true, seed=int(seed), burn_in=int(burn_in))


def _replication(params0: ModelParams, T: int, burn_in: int, seed: int,
                 gaussian: bool, delta: float, max_iter: int):
    """Simulate, initialize, estimate; None marks a failed replication."""
    sim = simulate(params0, T, burn_in=burn_in, seed=seed)
    try:
        res = fit(sim.y, gaussian=gaussian, delta=delta, max_iter=max_iter)
    except (EstimationError, ValueError, np.linalg.LinAlgError):
        return None
    if not res.converged:
        return None
    return res.theta


@dataclass(frozen=True)
class McReport:
    """Per-parameter MC mean, bias and RMSE for each sample size.

    `draws` keeps the successful replication estimates (one array of shape
    (successes, p) per sample size) so follow-up checks can reuse them.
    """

    labels: list
    theta_true: np.ndarray
    T_list: list
    M: int
    estimate: dict
    bias: dict
    rmse: dict
    mc_se: dict
    failures: dict
    draws: dict

    def to_frame(self):
        import pandas as pd

        data = {"parameter": self.labels,
                "true": self.theta_true}
        for T in self.T_list:
            data[f"estimate_T{T}"] = self.estimate[T]
            data[f"bias_T{T}"] = self.bias[T]
            data[f"rmse_T{T}"] = self.rmse[T]
        return pd.DataFrame(data)

    def to_csv(self, path) -> None:
        self.to_frame().to_csv(path, index=False)

    def to_text(self) -> str:
        """Aligned table: one row per parameter, Estimate/Bias/RMSE per T."""
        width = max(len(s) for s in self.labels) + 2
        head1 = " " * (width + 8)
        head2 = f"{'parameter':<{width}}{'true':>8}"
        for T in self.T_list:
            head1 += f"{f'T={T}':^30}"
            head2 += f"{'Estimate':>10}{'Bias':>10}{'RMSE':>10}"
        lines = [head1, head2]
        for i, label in enumerate(self.labels):
            row = f"{label:<{width}}{self.theta_true[i]:>8.3f}"
            for T in self.T_list:
                if np.isnan(self.estimate[T][i]):
                    row += f"{'--':>10}{'--':>10}{'--':>10}"
                else:
                    row += (f"{self.estimate[T][i]:>10.4f}"
                            f"{self.bias[T][i]:>10.4f}"
                            f"{self.rmse[T][i]:>10.4f}")
            lines.append(row)
        for T in self.T_list:
            note = f"T={T}: {self.failures[T]} of {self.M} replications failed"
            if self.failures[T] == self.M:
                note += " (cell unusable)"
            lines.append(note)
        return "\n".join(lines)


def mc_study(params0: ModelParams, T_list, M: int, base_seed: int = 0,
             parallelism: int = 1, burn_in: int = 1000, delta: float = 1e-6,
             max_iter: int = 200) -> McReport:
    """Simulate-and-refit study over sample sizes, M replications each.

    Replication m of every sample-size cell uses seed base_seed + m, and
    results are aggregated in replication order, so the report does not
    depend on `parallelism`.  Failed fits (estimation errors or
    non-convergence) are excluded and counted.
    """
    report = validate(params0)
    if not (report.nu_positive and report.omega_pd and report.phi_stationary):
        raise ValueError(f"parameters not admissible: {report}")
    gaussian = params0.gaussian or np.isinf(params0.nu)
    N = params0.N
    labels = theta_labels(N)
    free = active_indices(N, gaussian=gaussian)
    if gaussian:
        labels = labels[1:]
    theta_true = pack(params0).values[free]

    T_list = [int(T) for T in T_list]
    estimate, bias, rmse, mc_se, failures, draws = {}, {}, {}, {}, {}, {}
    for T in T_list:
        results = Parallel(n_jobs=parallelism)(
            delayed(_replication)(params0, T, burn_in, base_seed + m,
                                  gaussian, delta, max_iter)
            for m in range(M))
        kept = np.array([r for r in results if r is not None])
        failures[T] = int(sum(r is None for r in results))
        draws[T] = kept
        if kept.size == 0:
            p = free.size
            estimate[T] = np.full(p, np.nan)
            bias[T] = np.full(p, np.nan)
            rmse[T] = np.full(p, np.nan)
            mc_se[T] = np.full(p, np.nan)
            continue
        estimate[T] = kept.mean(axis=0)
        bias[T] = estimate[T] - theta_true
        rmse[T] = np.sqrt(np.mean((kept - theta_true) ** 2, axis=0))
        mc_se[T] = kept.std(axis=0, ddof=1) / np.sqrt(kept.shape[0]) \
            if kept.shape[0] > 1 else np.full(free.size, np.nan)
    return McReport(labels=labels, theta_true=theta_true, T_list=T_list,
                    M=int(M), estimate=estimate, bias=bias, rmse=rmse,
                    mc_se=mc_se, failures=failures, draws=draws)
