"""Reward alignment, random-challenge mixing and aggregator design."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import TrimTooLarge, WeightDimensionMismatch, ZeroWelfareGradient
from .linalg import QuadraticGame, SanctionOperator, as_vector, min_eigenvalue
from .manipulation import solve_manipulation

AGGREGATOR_KINDS = ("mean", "median", "trimmed", "sorted_weighted")


@dataclass(frozen=True)
class MixPolicy:
    """Challenge mixing: the evaluated signal is ``(1 - pi) s + pi c``."""

    pi: float
    eta: float = 1.0
    sigma_c: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.pi <= 1.0:
            raise ValueError(f"pi must lie in [0, 1], got {self.pi}")
        if not self.sigma_c > 0:
            raise ValueError("sigma_c must be positive")


def optimal_reward_direction(game: QuadraticGame) -> np.ndarray:
    """Unit reward direction proportional to ``K u``.

    Among rewards with fixed ``u.r`` this minimizes ``r^T M r``; plugged into
    the constrained problem it leaves no orthogonal gain at all.
    """
    if game.welfare_unconstrained:
        raise ZeroWelfareGradient("welfare gradient is zero")
    w = game.K @ game.u
    return w / np.linalg.norm(w)


def mixed_reward(game: QuadraticGame, mix: MixPolicy) -> np.ndarray:
    return (1.0 - mix.pi) * game.r + mix.pi * mix.eta * game.u


def mixed_index(game: QuadraticGame, sanction: SanctionOperator, mix: MixPolicy) -> float:
    return solve_manipulation(game.with_reward(mixed_reward(game, mix)), sanction).index_value


def mixing_bound(game: QuadraticGame, mix: MixPolicy, manip_index_at_pi0: float) -> float:
    """``(1-pi)^2 M + pi (1-pi) eta^2 |u|^2 / (2 lambda_min(K))``.

    Not monotone in ``pi`` in general: the slope at ``pi = 0`` is
    ``-2 M + eta^2 |u|^2 / (2 lambda_min(K))``, positive when the unmixed
    index is small.
    """
    lam = min_eigenvalue(game.K)
    pi = mix.pi
    return (1.0 - pi) ** 2 * manip_index_at_pi0 + 0.5 * pi * (1.0 - pi) * mix.eta**2 * float(
        game.u @ game.u
    ) / lam


# --- aggregation ---------------------------------------------------------------


def triangular_weights(n: int) -> np.ndarray:
    """Symmetric triangular rank profile peaking at the middle order statistics."""
    ranks = np.arange(1, n + 1, dtype=float)
    w = np.minimum(ranks, n + 1 - ranks)
    return w / w.sum()


@dataclass(frozen=True)
class AggregatorSpec:
    kind: str = "mean"
    trim_k: int = 0
    weights: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.kind not in AGGREGATOR_KINDS:
            raise ValueError(f"unknown aggregator kind {self.kind!r}")
        if self.trim_k < 0:
            raise ValueError("trim_k must be nonnegative")
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float)
            if np.any(w < 0) or not math.isclose(float(w.sum()), 1.0, rel_tol=0, abs_tol=1e-9):
                raise ValueError("weights must be nonnegative and sum to 1")

    @property
    def label(self) -> str:
        if self.kind == "trimmed":
            return f"trimmed_k{self.trim_k}"
        if self.kind == "sorted_weighted" and self.weights is None:
            return "sorted_weighted_tri"
        return self.kind

    def rank_weights(self, n: int) -> np.ndarray:
        """Weights applied to the sorted sample; every aggregator here is an L-statistic."""
        if self.kind == "mean":
            return np.full(n, 1.0 / n)
        if self.kind == "median":
            w = np.zeros(n)
            if n % 2:
                w[n // 2] = 1.0
            else:
                w[n // 2 - 1] = w[n // 2] = 0.5
            return w
        if self.kind == "trimmed":
            if 2 * self.trim_k >= n:
                raise TrimTooLarge(f"cannot trim {self.trim_k} from each side of {n} signals")
            w = np.zeros(n)
            w[self.trim_k : n - self.trim_k] = 1.0 / (n - 2 * self.trim_k)
            return w
        if self.weights is None:
            return triangular_weights(n)
        w = np.asarray(self.weights, dtype=float)
        if w.size != n:
            raise WeightDimensionMismatch(f"{w.size} weights for {n} signals")
        return w


def aggregate(spec: AggregatorSpec, signals) -> float:
    s = as_vector(signals, "signals")
    if spec.kind == "mean":
        return float(s.mean())
    if spec.kind == "median":
        return float(np.median(s))
    return float(np.sort(s) @ spec.rank_weights(s.size))


def n_eff(spec: AggregatorSpec, n: int) -> float:
    """Effective sample size; the median uses the Gaussian value ``2n/pi``."""
    if spec.kind == "median":
        return 2.0 * n / math.pi
    w = spec.rank_weights(n)
    return 1.0 / float(w @ w)


def gradient_sensitivity(spec: AggregatorSpec, n: int) -> float:
    """Largest first-order response to a unit-norm signal perturbation.

    Diagnostic only: it ranks the mean (``1/sqrt(n)``) below the median (1),
    the opposite of the finite-attack ordering used on the frontier.
    """
    w = spec.rank_weights(n)
    return float(np.linalg.norm(w))


@dataclass(frozen=True)
class ContaminationModel:
    rho: float = 0.0
    sigma_s: float = 1.0
    attack_magnitude: float | None = None

    def __post_init__(self):
        if not 0.0 <= self.rho < 0.5:
            raise ValueError("rho must lie in [0, 0.5)")
        if not self.sigma_s > 0:
            raise ValueError("sigma_s must be positive")
        if self.attack_magnitude is None:
            object.__setattr__(self, "attack_magnitude", 10.0 * self.sigma_s)
        elif not self.attack_magnitude > 0:
            raise ValueError("attack_magnitude must be positive")

    def corrupted_count(self, n: int) -> int:
        return math.ceil(self.rho * n - 1e-12)


def empirical_sensitivity(
    spec: AggregatorSpec,
    n: int,
    attack: ContaminationModel,
    seed: int = 0,
    baseline=None,
) -> float:
    """Worst absolute output shift when ``ceil(rho n)`` signals are shifted by
    ``+-attack_magnitude``.

    The honest baseline defaults to the noiseless consensus (all zeros); pass
    ``baseline`` to probe a specific profile. Up to three corruptions are
    searched exhaustively, more are added greedily. ``seed`` only matters when
    ``baseline="noisy"``, which draws a Gaussian profile with ``sigma_s``.
    """
    if n < 3:
        raise ValueError("n must be at least 3")
    if baseline is None:
        x0 = np.zeros(n)
    elif isinstance(baseline, str) and baseline == "noisy":
        x0 = np.random.default_rng(seed).normal(0.0, attack.sigma_s, n)
    else:
        x0 = as_vector(baseline, "baseline")
    c = attack.corrupted_count(n)
    if c == 0:
        return 0.0
    a = attack.attack_magnitude
    ref = aggregate(spec, x0)

    def shift(idx, signs) -> float:
        x = x0.copy()
        x[list(idx)] += a * np.asarray(signs)
        return abs(aggregate(spec, x) - ref)

    if c <= 3:
        best = 0.0
        # Aggregators are permutation invariant: targets with equal baseline values are interchangeable.
        seen = set()
        for idx in itertools.combinations(range(n), c):
            key = tuple(x0[list(idx)])
            if key in seen:
                continue
            seen.add(key)
            for signs in itertools.product((1.0, -1.0), repeat=c):
                best = max(best, shift(idx, signs))
        return best

    chosen: list[int] = []
    signs: list[float] = []
    best = 0.0
    for _ in range(c):
        step_best, step_pick = -1.0, None
        for i in range(n):
            if i in chosen:
                continue
            for sg in (1.0, -1.0):
                val = shift(chosen + [i], signs + [sg])
                if val > step_best:
                    step_best, step_pick = val, (i, sg)
        chosen.append(step_pick[0])
        signs.append(step_pick[1])
        best = max(best, step_best)
    return best


def contaminated_sample(rng: np.random.Generator, n: int, model: ContaminationModel, reps: int) -> np.ndarray:
    """``reps x n`` draws from ``(1-rho) N(0, sigma_s^2) + rho * (+-attack)``, symmetric signs."""
    x = rng.normal(0.0, model.sigma_s, size=(reps, n))
    if model.rho > 0:
        hit = rng.random((reps, n)) < model.rho
        sign = np.where(rng.random((reps, n)) < 0.5, -1.0, 1.0)
        x = np.where(hit, sign * model.attack_magnitude, x)
    return x


def variance_mc(spec: AggregatorSpec, n: int, model: ContaminationModel, reps: int, seed: int) -> float:
    if reps < 1000:
        raise ValueError("reps must be at least 1000")
    rng = np.random.default_rng(seed)
    x = contaminated_sample(rng, n, model, reps)
    if spec.kind == "mean":
        vals = x.mean(axis=1)
    elif spec.kind == "median":
        vals = np.median(x, axis=1)
    else:
        vals = np.sort(x, axis=1) @ spec.rank_weights(n)
    return float(vals.var(ddof=1))


@dataclass(frozen=True)
class FrontierPoint:
    spec: AggregatorSpec
    variance: float
    sensitivity: float
    n_eff: float
    gradient_sensitivity: float = field(default=math.nan)


def non_dominated(points: Sequence[tuple[float, float]]) -> list[int]:
    """Indices of points not weakly beaten in both coordinates (minimization)."""
    keep = []
    for i, (a, b) in enumerate(points):
        dominated = any(
            (c <= a and d <= b) and (c < a or d < b) for j, (c, d) in enumerate(points) if j != i
        )
        if not dominated:
            keep.append(i)
    return keep


def evaluate_aggregator(
    spec: AggregatorSpec, n: int, model: ContaminationModel, reps: int, seed: int
) -> FrontierPoint:
    return FrontierPoint(
        spec=spec,
        variance=variance_mc(spec, n, model, reps, seed),
        sensitivity=empirical_sensitivity(spec, n, model, seed),
        n_eff=n_eff(spec, n),
        gradient_sensitivity=gradient_sensitivity(spec, n),
    )


def candidate_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=(index,)).generate_state(1, np.uint64)[0])


def pareto_frontier(
    candidates: Sequence[AggregatorSpec],
    n: int,
    model: ContaminationModel,
    reps: int,
    seed: int,
) -> list[FrontierPoint]:
    if not candidates:
        raise ValueError("need at least one candidate aggregator")
    pts = [evaluate_aggregator(c, n, model, reps, candidate_seed(seed, i)) for i, c in enumerate(candidates)]
    keep = non_dominated([(p.variance, p.sensitivity) for p in pts])
    return sorted((pts[i] for i in keep), key=lambda p: (p.variance, p.sensitivity))
