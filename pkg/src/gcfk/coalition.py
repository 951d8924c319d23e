"""Coalition welfare effects, the benign sanction threshold and stability regimes."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np

from .errors import NonpositiveBaseline, NotAligned
from .linalg import QuadraticGame, SanctionOperator, as_vector, build_sanction

SIGN_TOL = 1e-10

CostSchedule = Union[float, Callable[[int], float]]


@dataclass(frozen=True)
class LinearCost:
    """Organizational cost ``c0 * (m - 1)`` for a coalition of ``m`` members."""

    c0: float = 0.1

    def __call__(self, m: int) -> float:
        return self.c0 * (m - 1)


@dataclass(frozen=True)
class CoalitionSpec:
    r_C: np.ndarray
    phi: float = 0.0
    kappa: CostSchedule = 0.0
    size: int = 2

    def __post_init__(self):
        object.__setattr__(self, "r_C", as_vector(self.r_C, "r_C"))
        if self.phi < 0:
            raise ValueError("phi must be nonnegative")
        if self.size < 1:
            raise ValueError("size must be positive")

    def cost(self) -> float:
        k = self.kappa(self.size) if callable(self.kappa) else float(self.kappa)
        if k < 0:
            raise ValueError("organizational cost must be nonnegative")
        return k


@dataclass(frozen=True)
class CoalitionVerdict:
    delta_u: float
    surplus: float
    classification: str


def _sanction(game: QuadraticGame, alpha) -> SanctionOperator:
    return alpha if isinstance(alpha, SanctionOperator) else build_sanction(game, alpha)


def coalition_delta_u(game: QuadraticGame, spec: CoalitionSpec, alpha) -> float:
    """``u.M_a r_C - phi |P_perp M_a r_C|^2`` at the coalition's reward-maximizing move."""
    s = _sanction(game, alpha)
    z = s.solve(spec.r_C)
    zp = s.P_perp @ z
    return float(game.u @ z - spec.phi * (zp @ zp))


def net_surplus(game: QuadraticGame, spec: CoalitionSpec, alpha) -> float:
    s = _sanction(game, alpha)
    return float(0.5 * spec.r_C @ s.solve(spec.r_C) - spec.cost())


def alpha_benign(game: QuadraticGame, spec: CoalitionSpec) -> float:
    u, r = game.u, spec.r_C
    ur = float(u @ r)
    if ur <= 0:
        raise NotAligned(f"u.r_C = {ur:.3g} <= 0; the coalition is never benign")
    s0 = build_sanction(game, 0.0)
    r_perp = s0.P_perp @ r
    rp2 = float(r_perp @ r_perp)
    if rp2 == 0.0 or spec.phi == 0.0:
        return 0.0
    return max(0.0, math.sqrt(spec.phi * s0.lambda_parallel * rp2 / ur) - s0.lambda_perp_min)


def exact_benign_crossing(game: QuadraticGame, spec: CoalitionSpec, alpha_max: float = 1e8) -> float:
    """Smallest ``alpha`` past which ``delta_u`` stays nonnegative, located by bisection.

    Assumes ``delta_u`` changes sign at most once on the bracket, which holds
    for aligned coalitions in practice; the closed-form threshold can be larger
    in anisotropic problems.
    """
    if float(game.u @ spec.r_C) <= 0:
        raise NotAligned("u.r_C <= 0; the coalition is never benign")

    def f(a):
        return coalition_delta_u(game, spec, a)

    if f(0.0) >= 0:
        return 0.0
    hi = 1.0
    while f(hi) < 0:
        hi *= 2.0
        if hi > alpha_max:
            return math.inf
    lo = 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if f(mid) >= 0:
            hi = mid
        else:
            lo = mid
        if hi - lo <= 1e-13 * max(1.0, hi):
            break
    return hi


def classify(game: QuadraticGame, spec: CoalitionSpec, alpha) -> CoalitionVerdict:
    s = _sanction(game, alpha)
    du = coalition_delta_u(game, spec, s)
    sc = net_surplus(game, spec, s)
    kind = "cooperative" if du >= -SIGN_TOL else "harmful"
    status = "sustainable" if sc > SIGN_TOL else "unsustainable"
    return CoalitionVerdict(du, sc, f"{kind}_{status}")


def price_of_cooperation(u_coal: float, u_nocoal: float) -> float:
    if not u_nocoal > 0:
        raise NonpositiveBaseline("no-coalition welfare must be positive")
    return u_coal / u_nocoal - 1.0


def benign_boundary_phi(game: QuadraticGame, r_C, alpha) -> float:
    """Externality level ``phi*(alpha)`` at which ``delta_u`` crosses zero."""
    s = _sanction(game, alpha)
    z = s.solve(as_vector(r_C, "r_C"))
    zp = s.P_perp @ z
    den = float(zp @ zp)
    num = float(game.u @ z)
    if den == 0.0:
        return math.inf if num >= 0 else -math.inf
    return num / den


@dataclass(frozen=True)
class DirectionSampler:
    """Coalition directions: normalized ``g + tilt * u/|u|`` with ``g`` standard normal."""

    tilt: float = 0.0

    def draw(self, rng: np.random.Generator, u: np.ndarray, draws: int) -> np.ndarray:
        g = rng.normal(size=(draws, u.size))
        g = g + self.tilt * (u / np.linalg.norm(u))
        return g / np.linalg.norm(g, axis=1, keepdims=True)


@dataclass(frozen=True)
class Heatmap:
    alphas: np.ndarray
    phis: np.ndarray
    fraction: np.ndarray  # shape (len(alphas), len(phis))

    def boundary(self, level: float = 0.5) -> np.ndarray:
        """Per phi, the smallest grid alpha whose cooperative fraction reaches ``level``."""
        out = np.full(self.phis.size, np.nan)
        for j in range(self.phis.size):
            hit = np.flatnonzero(self.fraction[:, j] >= level)
            if hit.size:
                out[j] = self.alphas[hit[0]]
        return out


def cooperative_fractions(
    game: QuadraticGame, alpha: float, phis: np.ndarray, directions: np.ndarray
) -> np.ndarray:
    """Fraction of ``directions`` with nonnegative welfare change, per ``phi``."""
    s = build_sanction(game, alpha)
    Z = s.solve(directions.T)  # p x draws
    aligned = game.u @ Z
    perp = s.P_perp @ Z
    perp_sq = np.einsum("ij,ij->j", perp, perp)
    du = aligned[None, :] - np.asarray(phis, dtype=float)[:, None] * perp_sq[None, :]
    return (du >= 0).mean(axis=1)


def stability_heatmap(
    game: QuadraticGame,
    alphas: Sequence[float],
    phis: Sequence[float],
    sampler: DirectionSampler,
    draws: int,
    seed: int,
) -> Heatmap:
    """Cooperative fraction on the (alpha, phi) grid.

    One set of directions is drawn from ``seed`` and shared by every cell, so
    each cell's value is independent of evaluation order and worker count and
    the phi-direction is exactly monotone.
    """
    if draws < 100:
        raise ValueError("draws must be at least 100")
    a = np.asarray(alphas, dtype=float)
    f = np.asarray(phis, dtype=float)
    dirs = sampler.draw(np.random.default_rng(seed), game.u, draws)
    frac = np.vstack([cooperative_fractions(game, al, f, dirs) for al in a])
    return Heatmap(a, f, frac)
