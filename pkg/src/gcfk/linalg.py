"""Small dense symmetric linear algebra for the local quadratic gaming model.

Everything here works on plain ``numpy`` arrays. The effective curvature is
``K = H + 2 q I`` and a sanction of strength ``alpha`` on welfare-orthogonal
manipulation gives ``K_alpha = K + alpha * P_perp``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import NonSymmetric, SingularCurvature, ZeroWelfareGradient

ZERO_GRADIENT_TOL = 1e-12
SYMMETRY_RTOL = 1e-12
PSD_RTOL = 1e-9
PD_FLOOR = 1e-10
EIG_FLOOR = 1e-12


def as_vector(x, name: str = "vector") -> np.ndarray:
    v = np.asarray(x, dtype=float)
    if v.ndim != 1 or v.size < 1:
        raise ValueError(f"{name} must be a nonempty 1-d array, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} has non-finite entries")
    return v


def as_symmetric(m, name: str = "matrix") -> np.ndarray:
    a = np.asarray(m, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise NonSymmetric(f"{name} must be square, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite entries")
    scale = max(np.abs(a).max(), 1.0)
    if np.abs(a - a.T).max() > SYMMETRY_RTOL * scale:
        raise NonSymmetric(f"{name} is not symmetric")
    return 0.5 * (a + a.T)


def min_eigenvalue(m) -> float:
    """Smallest eigenvalue of a symmetric matrix (symmetric eigensolve)."""
    a = as_symmetric(m)
    return float(scipy.linalg.eigvalsh(a, subset_by_index=[0, 0])[0])


def projector_perp(u) -> np.ndarray:
    """Orthogonal projector ``I - u u^T / |u|^2`` onto the complement of ``u``."""
    u = as_vector(u, "u")
    nu2 = float(u @ u)
    if math.sqrt(nu2) <= ZERO_GRADIENT_TOL:
        raise ZeroWelfareGradient("welfare gradient is zero; projector undefined")
    return np.eye(u.size) - np.outer(u, u) / nu2


def complement_basis(u) -> np.ndarray:
    """Orthonormal basis (as columns) of span(u)^perp.

    Built from the Householder reflector that maps ``u`` onto a multiple of
    ``e_1``; the remaining reflector columns span the complement.
    """
    u = as_vector(u, "u")
    norm = float(np.linalg.norm(u))
    if norm <= ZERO_GRADIENT_TOL:
        raise ZeroWelfareGradient("welfare gradient is zero")
    p = u.size
    v = u / norm
    v = v.copy()
    v[0] += 1.0 if v[0] >= 0 else -1.0
    reflector = np.eye(p) - 2.0 * np.outer(v, v) / float(v @ v)
    return reflector[:, 1:]


def restricted_min_eigenvalue(k, u) -> float:
    """min eigenvalue of ``k`` restricted to span(u)^perp; ``inf`` when p == 1."""
    basis = complement_basis(u)
    if basis.shape[1] == 0:
        return math.inf
    return min_eigenvalue(basis.T @ np.asarray(k, dtype=float) @ basis)


@dataclass(frozen=True)
class QuadraticGame:
    """Local quadratic environment: welfare gradient ``u``, reward gradient ``r``,
    audit curvature ``H`` (PSD), isotropic damping ``q`` and honest welfare ``U_hon``."""

    u: np.ndarray
    r: np.ndarray
    H: np.ndarray
    q: float = 0.0
    U_hon: float = 1.0

    def __post_init__(self):
        u = as_vector(self.u, "u")
        r = as_vector(self.r, "r")
        H = as_symmetric(self.H, "H")
        if not (u.size == r.size == H.shape[0]):
            raise ValueError(f"dimension mismatch: u {u.size}, r {r.size}, H {H.shape}")
        if self.q < 0:
            raise ValueError("q must be nonnegative")
        if not self.U_hon > 0:
            raise ValueError("U_hon must be positive")
        scale = max(float(np.abs(H).max()), EIG_FLOOR)
        if min_eigenvalue(H) < -PSD_RTOL * scale:
            raise ValueError("H must be positive semidefinite")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "q", float(self.q))
        object.__setattr__(self, "U_hon", float(self.U_hon))

    @property
    def dim(self) -> int:
        return self.u.size

    @property
    def K(self) -> np.ndarray:
        return self.H + 2.0 * self.q * np.eye(self.dim)

    @property
    def welfare_unconstrained(self) -> bool:
        return float(np.linalg.norm(self.u)) <= ZERO_GRADIENT_TOL

    def with_reward(self, r) -> "QuadraticGame":
        return QuadraticGame(self.u, r, self.H, self.q, self.U_hon)


@dataclass(frozen=True)
class SanctionOperator:
    alpha: float
    P_perp: np.ndarray
    K_alpha: np.ndarray
    M_alpha: np.ndarray
    lambda_perp_min: float
    lambda_parallel: float
    welfare_unconstrained: bool = False
    _cho: tuple = field(default=None, repr=False, compare=False)

    def solve(self, b) -> np.ndarray:
        """``K_alpha^{-1} b`` via the stored Cholesky factor."""
        return scipy.linalg.cho_solve(self._cho, np.asarray(b, dtype=float))


def build_sanction(game: QuadraticGame, alpha: float) -> SanctionOperator:
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    K = game.K
    p = game.dim
    if game.welfare_unconstrained:
        P = np.zeros((p, p))
        lam_perp = min_eigenvalue(K)
        lam_par = math.nan
    else:
        P = projector_perp(game.u)
        lam_perp = restricted_min_eigenvalue(K, game.u)
        lam_par = float(game.u @ K @ game.u / (game.u @ game.u))
    K_alpha = K + alpha * P
    K_alpha = 0.5 * (K_alpha + K_alpha.T)
    if min_eigenvalue(K_alpha) <= PD_FLOOR:
        raise SingularCurvature(f"K_alpha is not positive definite at alpha={alpha}")
    try:
        cho = scipy.linalg.cho_factor(K_alpha, lower=True)
    except np.linalg.LinAlgError as exc:
        raise SingularCurvature(str(exc)) from exc
    M = scipy.linalg.cho_solve(cho, np.eye(p))
    M = 0.5 * (M + M.T)
    return SanctionOperator(
        alpha=float(alpha),
        P_perp=P,
        K_alpha=K_alpha,
        M_alpha=M,
        lambda_perp_min=lam_perp,
        lambda_parallel=lam_par,
        welfare_unconstrained=game.welfare_unconstrained,
        _cho=cho,
    )
