"""Shared fixtures: benchmark data-generating process and finite-difference helpers.

The derivative recursions treat the filter's starting location as a fixed
constant, so every finite-difference check here perturbs the packed
parameter vector while holding mu_init unchanged.
"""

import numpy as np
import pytest

from robustloc.params import ModelParams, pack, unpack


def dgp_params(nu=5.0):
    """Bivariate benchmark process used across the test-suite."""
    return ModelParams(
        nu=nu,
        omega=np.array([-3.0, 5.0]),
        Omega=np.eye(2),
        Phi=np.diag([0.85, 0.80]),
        K=np.array([[0.95, 0.05], [0.05, 0.90]]),
    )


@pytest.fixture
def bench_params():
    return dgp_params(nu=5.0)


def random_admissible(rng, N=2, nu_range=(3.0, 15.0)):
    """Draw a random admissible parameter set (PD scale, stable Phi, invertible K)."""
    nu = rng.uniform(*nu_range)
    omega = rng.normal(scale=2.0, size=N)
    A = rng.normal(scale=0.6, size=(N, N))
    Omega = A @ A.T + 0.5 * np.eye(N)
    Phi = rng.normal(scale=0.4, size=(N, N))
    radius = max(abs(np.linalg.eigvals(Phi)))
    target = rng.uniform(0.3, 0.9)
    if radius > 1e-12:
        Phi = Phi * (target / radius)
    K = rng.normal(scale=0.3, size=(N, N)) + np.eye(N) * rng.uniform(0.4, 1.0)
    while abs(np.linalg.det(K)) < 1e-3:
        K = K + 0.2 * np.eye(N)
    return ModelParams(nu=nu, omega=omega, Omega=Omega, Phi=Phi, K=K)


def fd_grad(f, theta, h=1e-5):
    """Central finite-difference gradient of scalar f at packed theta."""
    theta = np.asarray(theta, dtype=float)
    g = np.empty(theta.size)
    for i in range(theta.size):
        step = h * max(1.0, abs(theta[i]))
        tp = theta.copy()
        tp[i] += step
        tm = theta.copy()
        tm[i] -= step
        g[i] = (f(tp) - f(tm)) / (2.0 * step)
    return g


def fd_jac(f, theta, h=1e-5):
    """Central finite-difference Jacobian of vector-valued f at packed theta.

    Returns shape f(theta).shape + (len(theta),), i.e. derivative indices last.
    """
    theta = np.asarray(theta, dtype=float)
    f0 = np.asarray(f(theta), dtype=float)
    out = np.empty(f0.shape + (theta.size,))
    for i in range(theta.size):
        step = h * max(1.0, abs(theta[i]))
        tp = theta.copy()
        tp[i] += step
        tm = theta.copy()
        tm[i] -= step
        out[..., i] = (np.asarray(f(tp)) - np.asarray(f(tm))) / (2.0 * step)
    return out


def draw_t_series(params, T, rng, burn=200):
    """Minimal model simulation for tests that predate the simulate module.

    Location starts at omega, runs `burn` warm-up steps, then records T draws.
    """
    N = params.N
    L = np.linalg.cholesky(params.Omega)
    mu = params.omega.copy()
    y = np.empty((T, N))
    for t in range(-burn, T):
        z = rng.standard_normal(N)
        if np.isinf(params.nu) or params.gaussian:
            eps = L @ z
        else:
            g = rng.chisquare(params.nu) / params.nu
            eps = L @ z / np.sqrt(g)
        yt = mu + eps
        w = 1.0 + float(eps @ np.linalg.solve(params.Omega, eps)) / params.nu \
            if not (params.gaussian or np.isinf(params.nu)) else 1.0
        u = eps / w
        mu = params.omega + params.Phi @ (mu - params.omega) + params.K @ u
        if t >= 0:
            y[t] = yt
    return y
