"""Optimal manipulation, the manipulability index and price-of-gaming bounds.

The manipulator maximizes ``G(z) = r.z - z^T K_alpha z / 2`` subject to the
welfare half-space ``u.z <= 0``. The KKT system has a closed form with one
multiplier, so nothing here iterates.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ZeroWelfareGradient
from .linalg import QuadraticGame, SanctionOperator, build_sanction

# u^T M r inside this band is treated as inactive; both branches agree there.
ACTIVE_BAND = 1e-10
NEG_GUARD = 1e-10


@dataclass(frozen=True)
class ManipulationSolution:
    z_star: np.ndarray
    multiplier: float
    constraint_active: bool
    index_value: float
    welfare_change: float


@dataclass(frozen=True)
class PogReport:
    pog_exact: float
    bound_cauchy: float
    bound_index: float
    bound_spectral: float
    pog_raw: float


def _clean_index(value: float) -> float:
    if -NEG_GUARD < value < 0.0:
        return 0.0
    return value


def solve_manipulation(game: QuadraticGame, sanction: SanctionOperator) -> ManipulationSolution:
    r, u = game.r, game.u
    Mr = sanction.solve(r)
    rMr = float(r @ Mr)
    if sanction.welfare_unconstrained:
        return ManipulationSolution(Mr, 0.0, False, _clean_index(0.5 * rMr), 0.0)
    uMr = float(u @ Mr)
    if uMr <= ACTIVE_BAND:
        return ManipulationSolution(Mr, 0.0, False, _clean_index(0.5 * rMr), float(u @ Mr))
    Mu = sanction.solve(u)
    uMu = float(u @ Mu)
    lam = uMr / uMu
    z = Mr - lam * Mu
    index = 0.5 * (rMr - uMr * uMr / uMu)
    return ManipulationSolution(z, lam, True, _clean_index(index), float(u @ z))


def manip_index(game: QuadraticGame, alpha: float) -> float:
    """Manipulability index at sanction strength ``alpha``."""
    return solve_manipulation(game, build_sanction(game, alpha)).index_value


def _perp_reward_sq(game: QuadraticGame) -> float:
    u, r = game.u, game.r
    nu2 = float(u @ u)
    if math.sqrt(nu2) <= 1e-12:
        raise ZeroWelfareGradient("welfare gradient is zero")
    r_perp = r - (float(u @ r) / nu2) * u
    return float(r_perp @ r_perp)


def index_upper_bound(game: QuadraticGame, alpha: float) -> float:
    """``|P_perp r|^2 / (2 (lambda_perp_min(K) + alpha))``.

    Only the constrained-active optimum is guaranteed to sit below this value;
    an inactive optimum keeps the aligned part of ``r`` and can exceed it.
    """
    rp2 = _perp_reward_sq(game)
    if rp2 == 0.0:
        return 0.0
    lam = build_sanction(game, 0.0).lambda_perp_min
    return rp2 / (2.0 * (lam + alpha))


def alpha_min(game: QuadraticGame, tau: float) -> float:
    """Smallest sanction for which the orthogonal-gain bound drops to ``tau``."""
    if not tau > 0:
        raise ValueError("tau must be positive")
    rp2 = _perp_reward_sq(game)
    lam = build_sanction(game, 0.0).lambda_perp_min
    return max(0.0, rp2 / (2.0 * tau) - lam)


def pog_report(game: QuadraticGame, sanction: SanctionOperator) -> PogReport:
    sol = solve_manipulation(game, sanction)
    u, r = game.u, game.r
    U = game.U_hon
    raw = max(0.0, -sol.welfare_change) / U
    if sol.constraint_active:
        raw = 0.0
    uMu = float(u @ sanction.M_alpha @ u)
    rMr = float(r @ sanction.M_alpha @ r)
    lam_min = float(np.linalg.eigvalsh(sanction.K_alpha)[0])
    return PogReport(
        pog_exact=min(1.0, max(0.0, raw)),
        bound_cauchy=math.sqrt(max(uMu * rMr, 0.0)) / U,
        bound_index=math.sqrt(max(2.0 * uMu * sol.index_value, 0.0)) / U,
        bound_spectral=float(np.linalg.norm(u) * np.linalg.norm(r)) / (lam_min * U),
        pog_raw=raw,
    )
