"""Second-order sensitivities and the observed Hessian of the log-likelihood.

Everything here rests on one observation: the robust score is u = s(v) v
with the scalar weight s = 1/w, so all of its second partials follow from
scalar calculus on s composed with the quadratic form in w.  The second
derivative of the predicted location then obeys its own linear recursion

    Z'_{ab} = X_t Z_{ab} + G_{ab},

driven by the same transition X_t as the first-order paths, with a forcing
G that collects (i) curvature of u in (v, nu, vech Omega), (ii) the
bilinear structural terms from perturbing Phi and K, all contracted with
the first-order paths.  The observed Hessian accumulates, per observation,
the explicit second partials of the log-density, the quadratic form of its
first partials in the location sensitivities, and the score times the
second-order location paths.

Derivative index convention matches params.pack: (nu, vech(Omega), omega,
vec(Phi), vec(K)); Gaussian mode drops the nu coordinate everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cholesky, solve_triangular
from scipy.special import digamma, polygamma

from .filtering import FilterOutput, _t_const
from .params import ModelParams, block_slices, duplication_matrix, theta_dim, validate

__all__ = [
    "UJacobians2",
    "Deriv2Paths",
    "second_u_jacobians",
    "filter_with_second_derivatives",
    "observed_hessian",
]


@dataclass(frozen=True)
class UJacobians2:
    """Second partials of the robust score u at one innovation.

    Indices are (output component, then derivative axes).  Location axes
    follow the mu convention: d/d mu = -d/d v.

    d2_nu_nu     : (N,)       d^2 u / d nu^2
    d2_nu_vech   : (N, q)     d^2 u / d nu d vech(Omega)
    d2_nu_mu     : (N, N)     d^2 u / d nu d mu
    d2_vech_vech : (N, q, q)  d^2 u / d vech d vech
    d2_mu_vech   : (N, N, q)  d^2 u / d mu d vech
    d2_mu_mu     : (N, N, N)  d^2 u / d mu d mu
    """

    d2_nu_nu: np.ndarray
    d2_nu_vech: np.ndarray
    d2_nu_mu: np.ndarray
    d2_vech_vech: np.ndarray
    d2_mu_vech: np.ndarray
    d2_mu_mu: np.ndarray


@dataclass
class Deriv2Paths:
    """Second-order location sensitivity paths, stored per block pair.

    blocks maps (name_i, name_j) with i <= j in canonical block order to an
    array of shape (T+1, N, size_i, size_j).  d2mu(t) reassembles the full
    (N, p, p) tensor at one time index.
    """

    blocks: dict
    block_order: tuple
    sizes: dict
    gaussian: bool

    def d2mu(self, t: int) -> np.ndarray:
        names = self.block_order
        p = sum(self.sizes[n] for n in names)
        first = self.blocks[(names[0], names[0])]
        N = first.shape[1]
        out = np.empty((N, p, p))
        offs = {}
        o = 0
        for n in names:
            offs[n] = o
            o += self.sizes[n]
        for i, ni in enumerate(names):
            for j, nj in enumerate(names):
                a, b = offs[ni], offs[nj]
                si, sj = self.sizes[ni], self.sizes[nj]
                if i <= j:
                    out[:, a:a + si, b:b + sj] = self.blocks[(ni, nj)][t]
                else:
                    out[:, a:a + si, b:b + sj] = np.transpose(
                        self.blocks[(nj, ni)][t], (0, 2, 1))
        return out


def _weight_partials(v, A, nu, D):
    """First and second partials of w = 1 + v'Av/nu in (v, nu, vec Omega).

    Returns a dict; vec-Omega axes are in full N^2 coordinates, the caller
    contracts with the duplication matrix.
    """
    N = v.shape[0]
    P = A @ v
    w = 1.0 + float(v @ P) / nu
    PP = np.kron(P, P)
    # d^2 (v'Av) / dvecOmega dvecOmega', entry [(i+jN),(k+lN)]
    M2 = (np.einsum("ik,j,l->ijkl", A, P, P)
          + np.einsum("i,jk,l->ijkl", P, A, P))
    M2 = M2.transpose(1, 0, 3, 2).reshape(N * N, N * N)
    return {
        "w": w,
        "P": P,
        "v": (2.0 / nu) * P,                       # dw/dv
        "vv": (2.0 / nu) * A,                      # d2w/dvdv'
        "n": -(w - 1.0) / nu,                      # dw/dnu
        "nn": 2.0 * (w - 1.0) / nu ** 2,           # d2w/dnu2
        "vn": -(2.0 / nu ** 2) * P,                # d2w/dv dnu
        "h": -PP / nu,                             # dw/dvecOmega
        "vh": -(2.0 / nu) * np.kron(P[None, :], A),  # d2w/dv dvecOmega'
        "nh": PP / nu ** 2,                        # d2w/dnu dvecOmega
        "hh": M2 / nu,                             # d2w/dvecOmega dvecOmega'
    }


def second_u_jacobians(v: np.ndarray, Omega: np.ndarray, nu: float) -> UJacobians2:
    """Closed-form second partials of u = v / w at one innovation.

    All blocks vanish at v = 0 and in the nu -> inf limit (u becomes linear
    in v with no scale or tail dependence).
    """
    v = np.asarray(v, dtype=float)
    N = v.shape[0]
    q = N * (N + 1) // 2
    D = duplication_matrix(N)
    if np.isinf(nu):
        return UJacobians2(
            d2_nu_nu=np.zeros(N), d2_nu_vech=np.zeros((N, q)),
            d2_nu_mu=np.zeros((N, N)), d2_vech_vech=np.zeros((N, q, q)),
            d2_mu_vech=np.zeros((N, N, q)), d2_mu_mu=np.zeros((N, N, N)))
    A = np.linalg.inv(np.asarray(Omega, dtype=float))
    W = _weight_partials(v, A, nu, D)
    w = W["w"]
    s = 1.0 / w
    s2, s3 = s * s, s ** 3
    # scalar chain rule: s_x = -s^2 w_x ; s_xy = 2 s^3 w_x w_y - s^2 w_xy
    s_v = -s2 * W["v"]
    s_n = -s2 * W["n"]
    s_h = -s2 * W["h"]
    s_vv = 2.0 * s3 * np.outer(W["v"], W["v"]) - s2 * W["vv"]
    s_vn = 2.0 * s3 * W["n"] * W["v"] - s2 * W["vn"]
    s_nn = 2.0 * s3 * W["n"] ** 2 - s2 * W["nn"]
    s_vh = 2.0 * s3 * np.outer(W["v"], W["h"]) - s2 * W["vh"]
    s_nh = 2.0 * s3 * W["n"] * W["h"] - s2 * W["nh"]
    s_hh = 2.0 * s3 * np.outer(W["h"], W["h"]) - s2 * W["hh"]

    I = np.eye(N)
    # u_i = s v_i: second partials add curvature of s times v plus the
    # first partials of s on the identity slots
    H_vv = (np.einsum("jk,i->ijk", s_vv, v)
            + np.einsum("j,ik->ijk", s_v, I)
            + np.einsum("k,ij->ijk", s_v, I))
    H_vn = np.outer(v, s_vn) + s_n * I
    H_nn = s_nn * v
    H_vh = (np.einsum("jc,i->ijc", s_vh, v)
            + np.einsum("c,ij->ijc", s_h, I))
    H_nh = np.outer(v, s_nh)
    H_hh = np.einsum("cd,i->icd", s_hh, v)

    # contract vec-Omega axes with the duplication matrix; flip v -> mu signs
    return UJacobians2(
        d2_nu_nu=H_nn,
        d2_nu_vech=H_nh @ D,
        d2_nu_mu=-H_vn,
        d2_vech_vech=np.einsum("icd,ce,df->ief", H_hh, D, D),
        d2_mu_vech=-np.einsum("ijc,cd->ijd", H_vh, D),
        d2_mu_mu=H_vv,
    )


def _loglik_second_partials(v, A, nu, D, gaussian):
    """Explicit second partials of one observation's log-density.

    Returns dict with keys vv (N,N), vn (N,), nn (scalar), vh (N,q),
    nh (q,), hh (q,q), all in the v convention (flip signs per v -> mu).
    """
    N = v.shape[0]
    P = A @ v
    AA = np.kron(A, A)
    if gaussian:
        PPm = (np.einsum("ik,j,l->ijkl", A, P, P)
               + np.einsum("i,jk,l->ijkl", P, A, P))
        PPm = PPm.transpose(1, 0, 3, 2).reshape(N * N, N * N)
        q = N * (N + 1) // 2
        return {
            "vv": -A,
            "vn": np.zeros(N),
            "nn": 0.0,
            "vh": np.kron(P[None, :], A) @ D,
            "nh": np.zeros(q),
            "hh": D.T @ (0.5 * AA - 0.5 * PPm) @ D,
        }
    W = _weight_partials(v, A, nu, D)
    w = W["w"]
    s = 1.0 / w
    half_dof = 0.5 * (nu + N)
    # g = log w: g_x = s w_x ; g_xy = s w_xy - s^2 w_x w_y
    g_v = s * W["v"]
    g_n = s * W["n"]
    g_h = s * W["h"]
    g_vv = s * W["vv"] - s * s * np.outer(W["v"], W["v"])
    g_vn = s * W["vn"] - s * s * W["n"] * W["v"]
    g_nn = s * W["nn"] - s * s * W["n"] ** 2
    g_vh = s * W["vh"] - s * s * np.outer(W["v"], W["h"])
    g_nh = s * W["nh"] - s * s * W["n"] * W["h"]
    g_hh = s * W["hh"] - s * s * np.outer(W["h"], W["h"])
    c2 = 0.25 * polygamma(1, half_dof) - 0.25 * polygamma(1, nu / 2.0) \
        + N / (2.0 * nu ** 2)
    return {
        "vv": -half_dof * g_vv,
        "vn": -0.5 * g_v - half_dof * g_vn,
        "nn": c2 - g_n - half_dof * g_nn,
        "vh": (-half_dof * g_vh) @ D,
        "nh": D.T @ (-0.5 * g_h - half_dof * g_nh),
        "hh": D.T @ (0.5 * AA - half_dof * g_hh) @ D,
    }


def _second_order_pass(params, y, mu_init, keep_paths):
    """Joint filter / first-derivative / second-derivative recursion.

    Returns (FilterOutput, dmu, dell, hessian, d2mu_or_None).
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
    p = theta_dim(N) - (1 if gaussian else 0)
    off = 0 if gaussian else 1
    sl_h = slice(off, off + q)
    i_om = off + q
    i_phi = i_om + N
    i_k = i_phi + N * N

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
    vv_ = np.empty((T, N))
    uu_ = np.empty((T, N))
    ww_ = np.empty(T)
    bb_ = np.empty(T)
    ell = np.empty(T)
    dmu = np.empty((T + 1, N, p))
    dell = np.empty((T, p))
    hess = np.zeros((p, p))
    d2mu = np.empty((T + 1, N, p, p)) if keep_paths else None

    mu_t = np.array(omega if mu_init is None else mu_init, dtype=float)
    M = np.zeros((N, p))
    Z = np.zeros((N, p, p))
    for t in range(T):
        mu[t] = mu_t
        dmu[t] = M
        if keep_paths:
            d2mu[t] = Z
        v_t = y[t] - mu_t
        vv_[t] = v_t
        P = A @ v_t
        qf = float(v_t @ P)

        # ---- filtered quantities, score partials, u jacobians
        if gaussian:
            w_t, b_t = 1.0, 0.0
            u_t = v_t
            ell[t] = const - 0.5 * qf
            varsig = P
            beta = 0.5 * D.T @ (np.kron(P, P) - vecA)
            C = -I
        else:
            w_t = 1.0 + qf / nu
            b_t = 1.0 - 1.0 / w_t
            s = 1.0 / w_t
            u_t = s * v_t
            ell[t] = const - 0.5 * (nu + N) * np.log(w_t)
            coef = (nu + N) / (nu * w_t)
            varsig = coef * P
            beta = 0.5 * D.T @ (coef * np.kron(P, P) - vecA)
            alpha = dig + 0.5 * ((nu + N) / nu * b_t - np.log(w_t))
            a_j = v_t * (b_t * s / nu)
            B_j = (s * s / nu) * np.outer(v_t, np.kron(P, P)) @ D
            C = (2.0 * s * s / nu) * np.outer(v_t, v_t) @ A - s * I
        ww_[t], bb_[t] = w_t, b_t
        uu_[t] = u_t

        # ---- first-order score row
        row = varsig @ M
        row[sl_h] += beta
        if not gaussian:
            row[0] += alpha
        dell[t] = row

        # ---- Hessian accumulation at time t
        L2 = _loglik_second_partials(v_t, A, nu, D, gaussian)
        Q = M.T @ L2["vv"] @ M       # l_mumu = l_vv
        col_h = M.T @ (-L2["vh"])    # l_mu,h = -l_vh
        Q[:, sl_h] += col_h
        Q[sl_h, :] += col_h.T
        Q[sl_h, sl_h] += L2["hh"]
        if not gaussian:
            col_n = M.T @ (-L2["vn"])
            Q[:, 0] += col_n
            Q[0, :] += col_n
            Q[0, 0] += L2["nn"]
            Q[0, sl_h] += L2["nh"]
            Q[sl_h, 0] += L2["nh"]
        Q += np.einsum("i,iab->ab", varsig, Z)
        hess += Q

        # ---- advance first-order paths
        X = Phi + K @ C
        Dv = -M  # dv/dtheta'
        Du = C @ M  # = u_v dv (u_v = -C)
        if not gaussian:
            Du[:, 0] += a_j
            Du[:, sl_h] += B_j
        F = np.zeros((N, p))
        if not gaussian:
            F[:, 0] = K @ a_j
            F[:, sl_h] = K @ B_j
        F[:, i_om:i_om + N] = ImPhi
        F[:, i_phi:i_phi + N * N] = np.kron((mu_t - omega)[None, :], I)
        F[:, i_k:i_k + N * N] = np.kron(u_t[None, :], I)

        # ---- advance second-order paths
        G = np.zeros((N, p, p))
        if not gaussian:
            J2 = second_u_jacobians(v_t, params.Omega, nu)
            # curvature of u contracted with first-order paths; mu-axis
            # tensors already absorb the v -> mu sign
            Tt = np.einsum("ijk,ja,kb->iab", J2.d2_mu_mu, M, M)
            mix_h = np.einsum("ijc,ja->iac", -J2.d2_mu_vech, Dv)
            Tt[:, :, sl_h] += mix_h
            Tt[:, sl_h, :] += mix_h.transpose(0, 2, 1)
            mix_n = -J2.d2_nu_mu @ Dv  # (N, p) rows d2u/dnu dv . dv_a
            Tt[:, :, 0] += mix_n
            Tt[:, 0, :] += mix_n
            Tt[:, 0, 0] += J2.d2_nu_nu
            Tt[:, 0, sl_h] += J2.d2_nu_vech
            Tt[:, sl_h, 0] += J2.d2_nu_vech
            Tt[:, sl_h, sl_h] += J2.d2_vech_vech
            G += np.einsum("ij,jab->iab", K, Tt)
        # structural bilinear terms from perturbing Phi and K
        Mw = M.copy()
        Mw[:, i_om:i_om + N] -= I  # d(mu - omega)/dtheta'
        for idx in range(N * N):
            i_, j_ = idx % N, idx // N
            G[i_, i_phi + idx, :] += Mw[j_]
            G[i_, :, i_phi + idx] += Mw[j_]
            G[i_, i_k + idx, :] += Du[j_]
            G[i_, :, i_k + idx] += Du[j_]
        Z = np.einsum("ij,jab->iab", X, Z) + G
        M = X @ M + F
        mu_t = omega + Phi @ (mu_t - omega) + K @ u_t
    mu[T] = mu_t
    dmu[T] = M
    if keep_paths:
        d2mu[T] = Z

    std_resid = solve_triangular(L, vv_.T, lower=True).T
    filt = FilterOutput(mu=mu, v=vv_, u=uu_, w=ww_, b=bb_, ell=ell,
                        loglik=float(ell.sum()), std_resid=std_resid)
    hess = 0.5 * (hess + hess.T)
    return filt, dmu, dell, hess, d2mu


_BLOCK_ORDER = ("nu", "vech_Omega", "omega", "vec_Phi", "vec_K")


def filter_with_second_derivatives(params: ModelParams, y: np.ndarray,
                                   mu_init=None):
    """Filter with first- and second-order location sensitivity paths.

    Returns (FilterOutput, dmu, Deriv2Paths): dmu has shape (T+1, N, p) and
    the second paths are stored per block pair.  Both start at zero.
    """
    filt, dmu, _, _, d2mu = _second_order_pass(params, y, mu_init,
                                               keep_paths=True)
    N = params.N
    gaussian = params.gaussian or np.isinf(params.nu)
    sizes_full = {"nu": 1, "vech_Omega": N * (N + 1) // 2, "omega": N,
                  "vec_Phi": N * N, "vec_K": N * N}
    names = tuple(n for n in _BLOCK_ORDER if not (gaussian and n == "nu"))
    offs = {}
    o = 0
    for n in names:
        offs[n] = o
        o += sizes_full[n]
    blocks = {}
    for i, ni in enumerate(names):
        for nj in names[i:]:
            a, b = offs[ni], offs[nj]
            blocks[(ni, nj)] = d2mu[:, :, a:a + sizes_full[ni],
                                    b:b + sizes_full[nj]].copy()
    paths = Deriv2Paths(blocks=blocks, block_order=names,
                        sizes={n: sizes_full[n] for n in names},
                        gaussian=gaussian)
    return filt, dmu, paths


def observed_hessian(params: ModelParams, y: np.ndarray, mu_init=None) -> np.ndarray:
    """Observed Hessian of the total log-likelihood, symmetrized.

    Accumulates per observation without storing second-order paths, so
    memory stays at O(N p^2) regardless of T.
    """
    _, _, _, hess, _ = _second_order_pass(params, y, mu_init, keep_paths=False)
    return hess
