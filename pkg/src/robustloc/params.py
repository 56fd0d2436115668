"""Parameter containers, packing conventions and admissibility checks.

The full parameter vector is laid out as

    theta = (nu, vech(Omega), omega, vec(Phi), vec(K)),

with ``vech`` the column-major lower triangle and ``vec`` column-major
stacking.  Every derivative, score and information-matrix layout in the
package depends on this single ordering, so it lives here and nowhere else.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ModelParams",
    "PackedTheta",
    "AdmissibilityReport",
    "pack",
    "unpack",
    "duplication_matrix",
    "validate",
    "theta_dim",
    "vech",
    "unvech",
    "vech_indices",
]


def theta_dim(N: int) -> int:
    """Length of the packed parameter vector: 1 + N(N+1)/2 + N + 2N^2."""
    return 1 + N * (N + 1) // 2 + N + 2 * N * N


def vech_indices(N: int):
    """(row, col) index arrays of the column-major lower triangle."""
    rows, cols = np.tril_indices(N)
    # np.tril_indices walks row-major; reorder to column-major lower triangle
    order = np.lexsort((rows, cols))
    return rows[order], cols[order]


def vech(S: np.ndarray) -> np.ndarray:
    """Column-major lower-triangle half-vectorization of a square matrix."""
    N = S.shape[0]
    r, c = vech_indices(N)
    return np.asarray(S)[r, c]


def unvech(v: np.ndarray, N: int | None = None) -> np.ndarray:
    """Rebuild a symmetric matrix from its vech."""
    v = np.asarray(v, dtype=float)
    if N is None:
        N = int(round((np.sqrt(1 + 8 * v.size) - 1) / 2))
    if v.size != N * (N + 1) // 2:
        raise ValueError(f"vech of length {v.size} does not fit any N (got N={N})")
    S = np.zeros((N, N))
    r, c = vech_indices(N)
    S[r, c] = v
    S[c, r] = v
    return S


def duplication_matrix(N: int) -> np.ndarray:
    """Duplication matrix D_N with vec(S) = D_N @ vech(S) for symmetric S.

    Shape (N^2, N(N+1)/2); vec and vech are both column-major.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    q = N * (N + 1) // 2
    D = np.zeros((N * N, q))
    r, c = vech_indices(N)
    pos = {(int(i), int(j)): k for k, (i, j) in enumerate(zip(r, c))}
    for j in range(N):
        for i in range(N):
            vec_row = j * N + i  # column-major vec index of S[i, j]
            key = (i, j) if i >= j else (j, i)
            D[vec_row, pos[key]] = 1.0
    return D


@dataclass(frozen=True)
class ModelParams:
    """Model parameters for the heavy-tailed dynamic-location model.

    Parameters
    ----------
    nu : float
        Degrees of freedom, > 0.  Ignored when ``gaussian`` is set.
    omega : (N,) array
        Unconditional location.
    Omega : (N, N) array
        Scale matrix; symmetrized on construction, must be positive definite
        for filtering.
    Phi : (N, N) array
        Autoregressive matrix of the location recursion.
    K : (N, N) array
        Loading matrix on the robust score.
    gaussian : bool
        Exact Gaussian limit (the score equals the innovation, unit weight).
    """

    nu: float
    omega: np.ndarray
    Omega: np.ndarray
    Phi: np.ndarray
    K: np.ndarray
    gaussian: bool = False
    N: int = field(init=False)

    def __post_init__(self):
        omega = np.atleast_1d(np.asarray(self.omega, dtype=float)).copy()
        N = omega.shape[0]
        Omega = np.asarray(self.Omega, dtype=float).reshape(N, N)
        Omega = 0.5 * (Omega + Omega.T)  # absorb rounding asymmetry
        Phi = np.asarray(self.Phi, dtype=float).reshape(N, N).copy()
        K = np.asarray(self.K, dtype=float).reshape(N, N).copy()
        if not self.gaussian and not (np.isfinite(self.nu) and self.nu > 0):
            raise ValueError(f"nu must be finite and > 0, got {self.nu}")
        for name, arr in (("omega", omega), ("Omega", Omega), ("Phi", Phi), ("K", K)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite entries")
        for arr in (omega, Omega, Phi, K):
            arr.flags.writeable = False
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "Omega", Omega)
        object.__setattr__(self, "Phi", Phi)
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "N", N)

    def to_json_dict(self) -> dict:
        d = {
            "nu": None if self.gaussian else float(self.nu),
            "omega": self.omega.tolist(),
            "Omega": self.Omega.tolist(),
            "Phi": self.Phi.tolist(),
            "K": self.K.tolist(),
        }
        if self.gaussian:
            d["gaussian"] = True
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2)

    @classmethod
    def from_json_dict(cls, d: dict) -> "ModelParams":
        gaussian = bool(d.get("gaussian", False)) or d.get("nu") is None
        nu = float(d["nu"]) if d.get("nu") is not None else np.inf
        return cls(nu=nu, omega=np.asarray(d["omega"], dtype=float),
                   Omega=np.asarray(d["Omega"], dtype=float),
                   Phi=np.asarray(d["Phi"], dtype=float),
                   K=np.asarray(d["K"], dtype=float),
                   gaussian=gaussian)

    @classmethod
    def from_json(cls, s: str) -> "ModelParams":
        return cls.from_json_dict(json.loads(s))


@dataclass(frozen=True)
class PackedTheta:
    """Flat parameter vector in the canonical ordering (see module docstring)."""

    values: np.ndarray
    N: int

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).copy()
        p = theta_dim(self.N)
        if values.shape != (p,):
            raise ValueError(
                f"packed theta for N={self.N} must have length {p}, got shape {values.shape}"
            )
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    def __len__(self):
        return self.values.shape[0]


def pack(params: ModelParams) -> PackedTheta:
    """Pack ModelParams into the canonical flat vector."""
    N = params.N
    theta = np.concatenate([
        [params.nu],
        vech(params.Omega),
        params.omega,
        params.Phi.flatten(order="F"),
        params.K.flatten(order="F"),
    ])
    return PackedTheta(values=theta, N=N)


def block_slices(N: int) -> dict:
    """Slices of the packed vector for each parameter block, in order."""
    q = N * (N + 1) // 2
    n2 = N * N
    return {
        "nu": slice(0, 1),
        "vech_Omega": slice(1, 1 + q),
        "omega": slice(1 + q, 1 + q + N),
        "vec_Phi": slice(1 + q + N, 1 + q + N + n2),
        "vec_K": slice(1 + q + N + n2, 1 + q + N + 2 * n2),
    }


def active_indices(N: int, gaussian: bool = False) -> np.ndarray:
    """Coordinates that are free during estimation; Gaussian mode drops nu."""
    idx = np.arange(theta_dim(N))
    return idx[1:] if gaussian else idx


def theta_labels(N: int) -> list:
    """Human-readable labels aligned with the packed ordering."""
    labels = ["nu"]
    rows, cols = np.tril_indices(N)
    order = np.lexsort((rows, cols))
    labels += [f"Omega_{rows[k] + 1}{cols[k] + 1}" for k in order]
    labels += [f"omega_{i + 1}" for i in range(N)]
    labels += [f"Phi_{i + 1}{j + 1}" for j in range(N) for i in range(N)]
    labels += [f"K_{i + 1}{j + 1}" for j in range(N) for i in range(N)]
    return labels


def unpack(theta, N: int, gaussian: bool = False) -> ModelParams:
    """Rebuild ModelParams from a packed vector (canonical ordering)."""
    if isinstance(theta, PackedTheta):
        if theta.N != N:
            raise ValueError(f"PackedTheta has N={theta.N}, requested N={N}")
        v = theta.values
    else:
        v = np.asarray(theta, dtype=float)
    p = theta_dim(N)
    if v.shape != (p,):
        raise ValueError(f"theta for N={N} must have length {p}, got shape {v.shape}")
    q = N * (N + 1) // 2
    nu = v[0]
    Omega = unvech(v[1:1 + q], N)
    omega = v[1 + q:1 + q + N]
    Phi = v[1 + q + N:1 + q + N + N * N].reshape(N, N, order="F")
    K = v[1 + q + N + N * N:].reshape(N, N, order="F")
    return ModelParams(nu=nu, omega=omega, Omega=Omega, Phi=Phi, K=K, gaussian=gaussian)


@dataclass(frozen=True)
class AdmissibilityReport:
    """Outcome of the admissibility predicates; a report, never an exception."""

    nu_positive: bool
    omega_pd: bool
    phi_stationary: bool
    k_nonsingular: bool
    spectral_radius: float

    @property
    def admissible(self) -> bool:
        return (self.nu_positive and self.omega_pd
                and self.phi_stationary and self.k_nonsingular)


def validate(params: ModelParams) -> AdmissibilityReport:
    """Check nu > 0, Omega PD, rho(Phi) < 1 and det K != 0."""
    nu_ok = params.gaussian or (np.isfinite(params.nu) and params.nu > 0)
    try:
        np.linalg.cholesky(params.Omega)
        pd_ok = True
    except np.linalg.LinAlgError:
        pd_ok = False
    eigvals = np.linalg.eigvals(params.Phi)
    rho = float(np.max(np.abs(eigvals))) if eigvals.size else 0.0
    phi_ok = rho < 1.0
    k_ok = abs(np.linalg.det(params.K)) > 0.0
    return AdmissibilityReport(
        nu_positive=bool(nu_ok),
        omega_pd=pd_ok,
        phi_stationary=phi_ok,
        k_nonsingular=bool(k_ok),
        spectral_radius=rho,
    )
