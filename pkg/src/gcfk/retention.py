"""Scalar retention map, its fixed points, trajectories and parameter sweeps.

The next-round retention rate is ``T(p) = F((b0 + b1 p - min(alpha, alpha_cap) - mu) / sigma)``
with ``F`` the standard logistic CDF.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy.optimize import brentq, minimize_scalar
from scipy.special import expit

STABILITY_BAND = 1e-6
ROOT_MERGE = 1e-6
ROOT_XTOL = 1e-12
SCAN_POINTS = 10_001
TANGENT_TOL = 1e-9
SWEEP_PARAMS = ("alpha", "sigma", "mu", "alpha_cap")


@dataclass(frozen=True)
class RetentionModel:
    b0: float
    b1: float
    alpha: float = 0.0
    mu: float = 0.0
    sigma: float = 1.0
    alpha_cap: float = math.inf

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if not self.b1 > 0:
            raise ValueError("b1 must be positive")
        if self.alpha < 0 or self.alpha_cap < 0:
            raise ValueError("alpha and alpha_cap must be nonnegative")

    @classmethod
    def symmetric(cls, b1: float = 2.4, sigma: float = 0.08, alpha: float = 0.0, **kw) -> "RetentionModel":
        """Configuration centred at p = 1/2: ``b0 = alpha - b1/2``, ``mu = 0``."""
        return cls(b0=alpha - 0.5 * b1, b1=b1, alpha=alpha, mu=0.0, sigma=sigma, **kw)

    @property
    def effective_alpha(self) -> float:
        return min(self.alpha, self.alpha_cap)

    def _arg(self, p):
        return (self.b0 + self.b1 * np.asarray(p, dtype=float) - self.effective_alpha - self.mu) / self.sigma


def retention_map(model: RetentionModel, p):
    t = np.clip(expit(model._arg(p)), 0.0, 1.0)
    return float(t) if np.ndim(t) == 0 else t


def map_derivative(model: RetentionModel, p):
    t = expit(model._arg(p))
    d = t * (1.0 - t) * model.b1 / model.sigma
    return float(d) if np.ndim(d) == 0 else d


def max_slope(model: RetentionModel) -> float:
    """Supremum of ``T'`` over the real line, ``b1 / (4 sigma)``."""
    return model.b1 / (4.0 * model.sigma)


@dataclass(frozen=True)
class FixedPointResult:
    p_star: float
    derivative: float
    stability: str


def classify_slope(d: float) -> str:
    if abs(d) < 1.0 - STABILITY_BAND:
        return "stable"
    if abs(d) > 1.0 + STABILITY_BAND:
        return "unstable"
    return "marginal"


def fixed_points(model: RetentionModel) -> list[FixedPointResult]:
    """All solutions of ``T(p) = p`` on [0, 1], in increasing order."""

    def g(p):
        return retention_map(model, p) - p

    grid = np.linspace(0.0, 1.0, SCAN_POINTS)
    vals = retention_map(model, grid) - grid
    roots: list[float] = []

    for i in np.flatnonzero(vals == 0.0):
        roots.append(float(grid[i]))
    sign = np.sign(vals)
    for i in np.flatnonzero(sign[:-1] * sign[1:] < 0):
        roots.append(brentq(g, grid[i], grid[i + 1], xtol=ROOT_XTOL, rtol=4 * np.finfo(float).eps))

    # Touching roots never change sign; look for interior extrema of g that graze zero.
    dv = np.diff(vals)
    for i in np.flatnonzero(dv[:-1] * dv[1:] < 0):
        lo, hi = grid[i], grid[i + 2]
        if vals[i + 1] > 0:
            res = minimize_scalar(g, bounds=(lo, hi), method="bounded", options={"xatol": 1e-12})
        else:
            res = minimize_scalar(lambda p: -g(p), bounds=(lo, hi), method="bounded", options={"xatol": 1e-12})
        if abs(g(res.x)) <= TANGENT_TOL:
            roots.append(float(res.x))

    # Clipping can pin T at an endpoint exactly.
    for end in (0.0, 1.0):
        if abs(g(end)) <= TANGENT_TOL * 1e-3:
            roots.append(end)

    roots.sort()
    merged: list[float] = []
    for r in roots:
        if merged and r - merged[-1] < ROOT_MERGE:
            continue
        merged.append(r)
    out = []
    for r in merged:
        d = map_derivative(model, r)
        out.append(FixedPointResult(p_star=float(r), derivative=float(d), stability=classify_slope(d)))
    return out


def simulate(model: RetentionModel, p0: float, steps: int, delay: int = 0) -> np.ndarray:
    """Trajectory ``p_{t+1} = T(p_{t - delay})``; entries before time 0 equal ``p0``."""
    if steps < 1:
        raise ValueError("steps must be at least 1")
    if delay not in (0, 1):
        raise ValueError("only delay 0 or 1 is supported")
    if not 0.0 <= p0 <= 1.0:
        raise ValueError("p0 must lie in [0, 1]")
    traj = np.empty(steps + 1)
    traj[0] = p0
    for t in range(steps):
        src = traj[t - delay] if t - delay >= 0 else p0
        traj[t + 1] = retention_map(model, src)
    return traj


@dataclass(frozen=True)
class SweepRow:
    value: float
    points: tuple[FixedPointResult, ...]

    @property
    def count(self) -> int:
        return len(self.points)

    @property
    def stable(self) -> list[float]:
        return [f.p_star for f in self.points if f.stability == "stable"]

    @property
    def p_high(self) -> float:
        return max(self.stable) if self.stable else math.nan

    @property
    def p_low(self) -> float:
        return min(self.stable) if self.stable else math.nan

    @property
    def p_dom(self) -> float:
        unstable = [f.p_star for f in self.points if f.stability == "unstable"]
        return unstable[0] if len(self.points) == 3 and unstable else math.nan


@dataclass(frozen=True)
class SweepTable:
    param: str
    rows: tuple[SweepRow, ...]

    def transitions(self) -> list[tuple[float, float, int, int]]:
        """Consecutive grid values between which the root count changes."""
        out = []
        for a, b in zip(self.rows, self.rows[1:]):
            if a.count != b.count:
                out.append((a.value, b.value, a.count, b.count))
        return out


def sweep(model: RetentionModel, param: str, values: Sequence[float]) -> SweepTable:
    if param not in SWEEP_PARAMS:
        raise ValueError(f"param must be one of {SWEEP_PARAMS}")
    vals = [float(v) for v in values]
    if not vals:
        raise ValueError("empty sweep grid")
    diffs = np.diff(vals)
    if not (np.all(diffs > 0) or np.all(diffs < 0)):
        raise ValueError("sweep grid must be strictly monotone")
    rows = tuple(SweepRow(v, tuple(fixed_points(replace(model, **{param: v})))) for v in vals)
    return SweepTable(param, rows)
