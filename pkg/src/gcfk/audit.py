"""Budgeted audit allocation by submodular coverage maximization.

Candidates are indexed from 0. The coverage objective is
``f(S) = sum_j w_j (1 - prod_{i in S} (1 - p_ij))``.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import AlreadySelected, DimensionMismatch, IndexOutOfRange, TooLarge
from .linalg import QuadraticGame
from .manipulation import manip_index

IMPROVE_TOL = 1e-12
MAX_EXHAUSTIVE = 20


@dataclass(frozen=True)
class AuditInstance:
    costs: np.ndarray
    budget: float
    weights: np.ndarray
    probs: np.ndarray  # m x p_r
    thresholds: np.ndarray | None = None
    lagrange_lambda: float = 0.0

    def __post_init__(self):
        costs = np.asarray(self.costs, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        probs = np.atleast_2d(np.asarray(self.probs, dtype=float))
        if probs.shape != (costs.size, weights.size):
            raise DimensionMismatch(
                f"probs shape {probs.shape} != ({costs.size}, {weights.size})"
            )
        if np.any(costs <= 0):
            raise ValueError("costs must be positive")
        if not self.budget > 0:
            raise ValueError("budget must be positive")
        if np.any(weights < 0):
            raise ValueError("risk weights must be nonnegative")
        if np.any((probs < 0) | (probs > 1)):
            raise ValueError("coverage probabilities must lie in [0, 1]")
        if self.lagrange_lambda < 0:
            raise ValueError("lagrange_lambda must be nonnegative")
        object.__setattr__(self, "costs", costs)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "probs", probs)
        if self.thresholds is not None:
            object.__setattr__(self, "thresholds", np.asarray(self.thresholds, dtype=float))

    @property
    def m(self) -> int:
        return self.costs.size


@dataclass(frozen=True)
class AllocationResult:
    selected: frozenset
    objective: float
    cost_used: float
    evaluations: int = 0


def _check(inst: AuditInstance, s: Iterable[int]) -> list[int]:
    s = sorted(set(int(i) for i in s))
    for i in s:
        if not 0 <= i < inst.m:
            raise IndexOutOfRange(f"candidate {i} outside 0..{inst.m - 1}")
    return s


def survival(inst: AuditInstance, s: Iterable[int]) -> np.ndarray:
    """Per-risk probability that nothing in ``s`` covers it."""
    idx = _check(inst, s)
    if not idx:
        return np.ones(inst.weights.size)
    return np.prod(1.0 - inst.probs[idx], axis=0)


def coverage_objective(inst: AuditInstance, s: Iterable[int]) -> float:
    return float(inst.weights @ (1.0 - survival(inst, s)))


def _gain(inst: AuditInstance, surv: np.ndarray, i: int) -> float:
    return float(inst.weights @ (surv * inst.probs[i]))


def marginal_gain(inst: AuditInstance, s: Iterable[int], i: int) -> float:
    s = _check(inst, s)
    (i,) = _check(inst, [i])
    if i in s:
        raise AlreadySelected(f"candidate {i} is already in the set")
    return _gain(inst, survival(inst, s), i)


def _result(inst: AuditInstance, chosen: Iterable[int], evaluations: int) -> AllocationResult:
    chosen = frozenset(chosen)
    return AllocationResult(
        selected=chosen,
        objective=coverage_objective(inst, chosen),
        cost_used=float(inst.costs[sorted(chosen)].sum()) if chosen else 0.0,
        evaluations=evaluations,
    )


def lazy_greedy(inst: AuditInstance) -> AllocationResult:
    """Benefit-per-cost greedy with stale upper bounds kept in a heap.

    Ties go to the lowest candidate index. Candidates that no longer fit the
    remaining budget are dropped for good since the budget only shrinks.
    """
    surv = np.ones(inst.weights.size)
    remaining = float(inst.budget)
    chosen: list[int] = []
    evals = 0
    heap = []
    for i in range(inst.m):
        if inst.costs[i] > remaining + 1e-12:
            continue
        g = _gain(inst, surv, i)
        evals += 1
        heapq.heappush(heap, (-g / inst.costs[i], i, 0))
    round_no = 0
    while heap:
        neg_ratio, i, stamp = heapq.heappop(heap)
        if inst.costs[i] > remaining + 1e-12:
            continue
        if stamp == round_no:
            if -neg_ratio <= 0:
                break
            chosen.append(i)
            remaining -= inst.costs[i]
            surv = surv * (1.0 - inst.probs[i])
            round_no += 1
            continue
        g = _gain(inst, surv, i)
        evals += 1
        heapq.heappush(heap, (-g / inst.costs[i], i, round_no))
    return _result(inst, chosen, evals)


def naive_greedy(inst: AuditInstance) -> AllocationResult:
    """Same rule as :func:`lazy_greedy` but re-evaluates every candidate each round."""
    surv = np.ones(inst.weights.size)
    remaining = float(inst.budget)
    chosen: list[int] = []
    evals = 0
    while True:
        best, pick = 0.0, None
        for i in range(inst.m):
            if i in chosen or inst.costs[i] > remaining + 1e-12:
                continue
            ratio = _gain(inst, surv, i) / inst.costs[i]
            evals += 1
            if ratio > best:
                best, pick = ratio, i
        if pick is None:
            break
        chosen.append(pick)
        remaining -= inst.costs[pick]
        surv = surv * (1.0 - inst.probs[pick])
    return _result(inst, chosen, evals)


def exhaustive_opt(inst: AuditInstance) -> AllocationResult:
    """Exact optimum by depth-first subset enumeration, pruning over-budget branches."""
    if inst.m > MAX_EXHAUSTIVE:
        raise TooLarge(f"exhaustive search limited to {MAX_EXHAUSTIVE} candidates, got {inst.m}")
    best_val, best_set = 0.0, ()
    evals = 0
    budget = inst.budget + 1e-12

    def dfs(start: int, chosen: tuple, cost: float, surv: np.ndarray):
        nonlocal best_val, best_set, evals
        val = float(inst.weights @ (1.0 - surv))
        evals += 1
        if val > best_val + IMPROVE_TOL:
            best_val, best_set = val, chosen
        for i in range(start, inst.m):
            c = cost + inst.costs[i]
            if c <= budget:
                dfs(i + 1, chosen + (i,), c, surv * (1.0 - inst.probs[i]))

    dfs(0, (), 0.0, np.ones(inst.weights.size))
    return _result(inst, best_set, evals)


def local_search(inst: AuditInstance, start: AllocationResult, max_swaps: int = 100) -> AllocationResult:
    """Best-improvement hill climbing over add, drop and 1-for-1 swap moves."""
    current = set(start.selected)
    val = coverage_objective(inst, current)
    cost = float(inst.costs[sorted(current)].sum()) if current else 0.0
    if cost > inst.budget + 1e-12:
        raise ValueError("start allocation exceeds the budget")
    evals = start.evaluations
    for _ in range(max_swaps):
        best = None
        outside = [i for i in range(inst.m) if i not in current]
        moves = [((), (i,)) for i in outside]
        moves += [((j,), ()) for j in sorted(current)]
        moves += [((j,), (i,)) for j in sorted(current) for i in outside]
        for drop, add in moves:
            new_cost = cost - sum(inst.costs[j] for j in drop) + sum(inst.costs[i] for i in add)
            if new_cost > inst.budget + 1e-12:
                continue
            cand = (current - set(drop)) | set(add)
            v = coverage_objective(inst, cand)
            evals += 1
            if v > val + IMPROVE_TOL and (best is None or v > best[0] + IMPROVE_TOL):
                best = (v, cand, new_cost)
        if best is None:
            break
        val, current, cost = best
    return AllocationResult(frozenset(current), coverage_objective(inst, current), float(cost), evals)


# --- Lagrangian threshold penalty -------------------------------------------


def lagrangian_objective(inst: AuditInstance, s: Iterable[int], per_client_index: Sequence[float]) -> float:
    """``f(S) - lambda * sum_i max(0, M_i(S) - tau_i)``."""
    idx = np.asarray(per_client_index, dtype=float)
    taus = inst.thresholds if inst.thresholds is not None else np.zeros(0)
    if idx.shape != taus.shape:
        raise DimensionMismatch(f"{idx.size} client indices for {taus.size} thresholds")
    excess = np.maximum(0.0, idx - taus).sum()
    return coverage_objective(inst, s) - inst.lagrange_lambda * float(excess)


@dataclass(frozen=True)
class Reinforcement:
    """Audit action: add ``delta`` to diagonal entry ``coord`` of client ``client``'s curvature."""

    client: int
    coord: int
    delta: float
    cost: float


@dataclass
class ReinforcementProblem:
    """Gaming-reduction allocation across clients with diagonal curvature reinforcements."""

    games: Sequence[QuadraticGame]
    actions: Sequence[Reinforcement]
    budget: float
    thresholds: Sequence[float]
    _base: list = field(default_factory=list, init=False, repr=False)

    def __post_init__(self):
        if len(self.thresholds) != len(self.games):
            raise DimensionMismatch("one threshold per client required")
        self._base = [manip_index(g, 0.0) for g in self.games]

    def client_indices(self, s: Iterable[int]) -> np.ndarray:
        bumps = [np.zeros(g.dim) for g in self.games]
        for a in s:
            act = self.actions[a]
            bumps[act.client][act.coord] += act.delta
        out = []
        for g, b in zip(self.games, bumps):
            if np.any(b):
                g = QuadraticGame(g.u, g.r, g.H + np.diag(b), g.q, g.U_hon)
            out.append(manip_index(g, 0.0))
        return np.asarray(out)

    def reduction(self, s: Iterable[int]) -> float:
        return float(np.sum(self._base) - self.client_indices(s).sum())

    def penalized(self, s: Iterable[int], lam: float) -> float:
        idx = self.client_indices(s)
        excess = np.maximum(0.0, idx - np.asarray(self.thresholds)).sum()
        return float(np.sum(self._base) - idx.sum() - lam * excess)

    def cost(self, s: Iterable[int]) -> float:
        return float(sum(self.actions[a].cost for a in s))

    def feasible(self, s: Iterable[int]) -> bool:
        return bool(np.all(self.client_indices(s) <= np.asarray(self.thresholds) + 1e-12))


def greedy_set_function(value, costs: Sequence[float], budget: float) -> tuple[list[int], int]:
    """Plain benefit-per-cost greedy for an arbitrary set function ``value``."""
    chosen: list[int] = []
    spent = 0.0
    evals = 0
    current = value(chosen)
    while True:
        best, pick = 0.0, None
        for i in range(len(costs)):
            if i in chosen or spent + costs[i] > budget + 1e-12:
                continue
            gain = value(chosen + [i]) - current
            evals += 1
            if gain / costs[i] > best + IMPROVE_TOL:
                best, pick = gain / costs[i], i
        if pick is None:
            return chosen, evals
        chosen.append(pick)
        spent += costs[pick]
        current = value(chosen)


LAMBDA_LADDER = (0.5, 1.0, 2.0, 4.0, 8.0)


def lagrangian_greedy(problem: ReinforcementProblem, lambdas: Sequence[float] = LAMBDA_LADDER):
    """Greedy on the penalized objective for each ``lambda``; keep the best threshold-feasible set.

    Falls back to the best penalized value when no ``lambda`` yields a feasible set.
    Returns ``(selected, lambda, reduction, feasible)``.
    """
    costs = [a.cost for a in problem.actions]
    best = None
    for lam in lambdas:
        chosen, _ = greedy_set_function(lambda s: problem.penalized(s, lam), costs, problem.budget)
        feas = problem.feasible(chosen)
        red = problem.reduction(chosen)
        key = (feas, red)
        if best is None or key > best[0]:
            best = (key, (frozenset(chosen), lam, red, feas))
    return best[1]


# --- instance files -----------------------------------------------------------


def format_instance(inst: AuditInstance) -> str:
    lines = [f"{inst.m} {inst.weights.size} {inst.budget!r}"]
    lines.append(" ".join(repr(float(c)) for c in inst.costs))
    lines.append(" ".join(repr(float(w)) for w in inst.weights))
    for row in inst.probs:
        lines.append(" ".join(repr(float(x)) for x in row))
    return "\n".join(lines) + "\n"


def parse_instance(text: str) -> AuditInstance:
    """Read the whitespace-separated instance format.

    Line 1: ``m p_r B``; line 2: m costs; line 3: p_r risk weights; then m lines of
    p_r coverage probabilities. Blank lines and ``#`` comments are ignored.
    """
    rows = [ln.split("#", 1)[0].split() for ln in text.splitlines()]
    rows = [r for r in rows if r]
    if len(rows) < 3:
        raise ValueError("instance needs a header, a cost line and a weight line")
    m, pr = int(rows[0][0]), int(rows[0][1])
    budget = float(rows[0][2])
    costs = [float(x) for x in rows[1]]
    weights = [float(x) for x in rows[2]]
    probs = [[float(x) for x in r] for r in rows[3:]]
    if len(costs) != m or len(weights) != pr or len(probs) != m or any(len(r) != pr for r in probs):
        raise DimensionMismatch("instance body does not match its header")
    return AuditInstance(np.array(costs), budget, np.array(weights), np.array(probs).reshape(m, pr))


def read_instance(path) -> AuditInstance:
    return parse_instance(Path(path).read_text(encoding="utf-8"))


def write_instance(inst: AuditInstance, path) -> None:
    Path(path).write_text(format_instance(inst), encoding="utf-8", newline="\n")


def random_instance(rng: np.random.Generator, m: int, p_r: int, density: float = 0.5) -> AuditInstance:
    """Sparse random coverage instance with costs in [0.5, 2] and budget 20-60% of total cost."""
    costs = rng.uniform(0.5, 2.0, m)
    weights = rng.uniform(0.2, 1.0, p_r)
    probs = rng.uniform(0.0, 1.0, (m, p_r)) * (rng.random((m, p_r)) < density)
    budget = float(rng.uniform(0.2, 0.6) * costs.sum())
    return AuditInstance(costs, budget, weights, probs)
