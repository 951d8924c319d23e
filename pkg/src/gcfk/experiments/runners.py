"""One function per experiment id, each returning ``{panel_file_name: Table}``.

Runners split their grid into independent cells, evaluate them through
:func:`pmap` and assemble rows in grid order, so the worker count never
changes the output.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from functools import partial
from typing import Callable, Sequence

import numpy as np

from ..audit import exhaustive_opt, lazy_greedy, local_search, naive_greedy, random_instance
from ..coalition import (
    CoalitionSpec,
    DirectionSampler,
    alpha_benign,
    benign_boundary_phi,
    coalition_delta_u,
    cooperative_fractions,
)
from ..linalg import QuadraticGame, build_sanction
from ..manipulation import alpha_min, index_upper_bound, manip_index, pog_report, solve_manipulation
from ..mechanism import (
    AggregatorSpec,
    ContaminationModel,
    MixPolicy,
    candidate_seed,
    evaluate_aggregator,
    mixed_reward,
    non_dominated,
    optimal_reward_direction,
)
from ..power import ObservationModel, PowerSpec, noncentrality, required_n, required_n_raw, required_n_tail
from ..retention import RetentionModel, simulate, sweep
from .io import Table

# Where each experiment's panels appear in the source figures.
FIGURES = {
    "static_threshold": "fig:static-threshold (a): index vs sanction strength by alignment angle",
    "alpha_min_contour": "fig:static-threshold (b): minimum sanction over tolerance and alignment",
    "dynamics_trajectories": "fig:dynamics-panels (a)-(c): trajectories, one-step delay, hysteresis",
    "exit_fixedpoint_sweeps": "fig:exit-fixedpoints-grid (a)-(d): fixed points under alpha, sigma, mu, cap",
    "coalition_boundary": "fig:coalition-boundary (a)-(b): coalition welfare sign over (phi, alpha)",
    "coalition_heatmap": "fig:coalition_heatmap: cooperative fraction over (alpha, phi)",
    "mechanism_grid": "fig:mech-grid (a)-(d): index and PoG over (alpha, pi); aggregator frontier",
    "power_contours": "fig:testing-requiredn-side (a)-(b): required rounds over (noise variance, pi)",
    "audit_greedy_bench": "greedy guarantee for budgeted audit allocation: greedy vs exhaustive",
}


def pmap(fn: Callable, items: Sequence, workers: int = 1) -> list:
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items, chunksize=max(1, len(items) // (4 * workers))))


def cell_seed(seed: int, index: int) -> int:
    return candidate_seed(seed, index)


def _game(params: dict, r=None) -> QuadraticGame:
    g = params["game"]
    u = np.asarray(g["u"], dtype=float)
    return QuadraticGame(
        u=u,
        r=u if r is None else np.asarray(r, dtype=float),
        H=np.diag(g["h_diag"]),
        q=g["q"],
        U_hon=g["u_hon"],
    )


def _rotated_reward(u: np.ndarray, theta_deg: float, norm: float) -> np.ndarray:
    """Reward at angle ``theta`` from ``u`` inside the plane of ``u`` and a fixed orthogonal axis."""
    e1 = u / np.linalg.norm(u)
    basis = np.eye(u.size)
    k = int(np.argmin(np.abs(e1)))
    e2 = basis[k] - (basis[k] @ e1) * e1
    e2 /= np.linalg.norm(e2)
    t = math.radians(theta_deg)
    return norm * (math.cos(t) * e1 + math.sin(t) * e2)


def _label(exp: str, panel: str) -> str:
    return f"experiment={exp} panel={panel} reproduces={FIGURES[exp]}"


# --- static thresholds ---------------------------------------------------------


def _static_cell(params: dict, cell: tuple[float, float]):
    theta, alpha = cell
    base = _game(params)
    game = base.with_reward(_rotated_reward(base.u, theta, params["reward_norm"]))
    s = build_sanction(game, alpha)
    sol = solve_manipulation(game, s)
    pog = pog_report(game, s)
    return (theta, alpha, sol.index_value, index_upper_bound(game, alpha), sol.constraint_active, pog.pog_exact)


def run_static_threshold(params: dict, seed: int, workers: int = 1) -> dict[str, Table]:
    alphas = np.linspace(0.0, params["alpha_max"], params["alpha_points"])
    cells = [(float(t), float(a)) for t in params["angles_deg"] for a in alphas]
    rows = pmap(partial(_static_cell, params), cells, workers)
    t = Table(
        ("theta_deg", "alpha", "index", "orthogonal_bound", "constraint_active", "pog"),
        rows,
        _label("static_threshold", "a"),
    )
    return {"static_threshold_a.csv": t}


def _amin_cell(params: dict, cell: tuple[float, float]):
    theta, tau = cell
    base = _game(params)
    game = base.with_reward(_rotated_reward(base.u, theta, params["reward_norm"]))
    a = alpha_min(game, tau)
    return (theta, tau, a, manip_index(game, a))


def run_alpha_min_contour(params: dict, seed: int, workers: int = 1) -> dict[str, Table]:
    thetas = np.linspace(0.0, params["angle_max_deg"], params["angle_points"])
    taus = np.geomspace(params["tau_min"], params["tau_max"], params["tau_points"])
    cells = [(float(t), float(tau)) for t in thetas for tau in taus]
    rows = pmap(partial(_amin_cell, params), cells, workers)
    t = Table(("theta_deg", "tau", "alpha_min", "index_at_alpha_min"), rows, _label("alpha_min_contour", "b"))
    return {"alpha_min_contour_b.csv": t}


# --- dynamics ------------------------------------------------------------------


def _retention(params: dict) -> RetentionModel:
    r = params["retention"]
    return RetentionModel.symmetric(b1=r["b1"], sigma=r["sigma"], alpha=r["alpha"])


def run_dynamics_trajectories(params: dict, seed: int, workers: int = 1) -> dict[str, Table]:
    model = _retention(params)
    steps = params["steps"]
    out = {}
    for panel, delay in (("a", 0), ("b", 1)):
        t = Table(("p0", "delay", "t", "p"), comment=_label("dynamics_trajectories", panel))
        for p0 in params["initial"]:
            for i, p in enumerate(simulate(model, p0, steps, delay)):
                t.append(float(p0), delay, i, float(p))
        out[f"dynamics_trajectories_{panel}.csv"] = t
    t = Table(("p0", "p_final", "basin"), comment=_label("dynamics_trajectories", "c"))
    for p0 in np.linspace(0.0, 1.0, params["hysteresis_points"]):
        final = float(simulate(model, float(p0), steps, 0)[-1])
        basin = "high" if final > 0.5 + 1e-9 else "low" if final < 0.5 - 1e-9 else "threshold"
        t.append(float(p0), final, basin)
    out["dynamics_trajectories_c.csv"] = t
    return out


def _grid(spec: dict) -> np.ndarray:
    return np.linspace(spec["start"], spec["stop"], spec["num"])


def _sweep_cell(args):
    base, param, value = args
    return sweep(base, param, [value]).rows[0]


def run_exit_fixedpoint_sweeps(params: dict, seed: int, workers: int = 1) -> dict[str, Table]:
    r = params["retention"]
    base = RetentionModel(b0=r["b0"], b1=r["b1"], alpha=r["alpha"], mu=r["mu"], sigma=r["sigma"])
    capped = RetentionModel(
        b0=r["b0"], b1=r["b1"], alpha=r["alpha"], mu=r["mu"], sigma=r["sigma"],
        alpha_cap=params["cap"]["alpha_cap"],
    )
    panels = (
        ("a", base, "alpha", _grid(params["alpha_grid"])),
        ("b", base, "sigma", _grid(params["sigma_grid"])),
        ("c", base, "mu", _grid(params["mu_grid"])),
        ("d", capped, "alpha", _grid(params["cap"])),
    )
    out = {}
    for panel, model, param, values in panels:
        rows = pmap(_sweep_cell, [(model, param, float(v)) for v in values], workers)
        t = Table(
            ("param", "value", "n_roots", "root", "p_star", "derivative", "stability"),
            comment=_label("exit_fixedpoint_sweeps", panel),
        )
        tr = Table(("param", "lower", "upper", "roots_before", "roots_after"), comment=_label("exit_fixedpoint_sweeps", panel))
        for row in rows:
            for k, fp in enumerate(row.points):
                t.append(param, row.value, row.count, k, fp.p_star, fp.derivative, fp.stability)
        for a, b in zip(rows, rows[1:]):
            if a.count != b.count:
                tr.append(param, a.value, b.value, a.count, b.count)
        out[f"exit_fixedpoint_sweeps_{panel}.csv"] = t
        out[f"exit_fixedpoint_sweeps_{panel}_transitions.csv"] = tr
    return out


# --- coalitions ----------------------------------------------------------------


def _boundary_cell(params: dict, cell):
    direction, alpha, phis = cell
    game = _game(params)
    s = build_sanction(game, alpha)
    r_c = np.asarray(direction, dtype=float)
    vals = [coalition_delta_u(game, CoalitionSpec(r_c, phi=float(f)), s) for f in phis]
    return vals, benign_boundary_phi(game, r_c, s)


def run_coalition_boundary(params: dict, seed: int, workers: int = 1) -> dict[str, Table]:
    alphas = np.linspace(0.0, params["alpha_max"], params["points"])
    phis = np.linspace(0.0, params["phi_max"], params["points"])
    out = {}
    for panel, key in (("a", "aligned_direction"), ("b", "anti_aligned_direction")):
        direction = tuple(params[key])
        res = pmap(partial(_boundary_cell, params), [(direction, float(a), tuple(phis)) for a in alphas], workers)
        grid = Table(("alpha", "phi", "delta_u", "cooperative"), comment=_label("coalition_boundary", panel))
        curve = Table(("alpha", "phi_star"), comment=_label("coalition_boundary", panel))
        for a, (vals, phi_star) in zip(alphas, res):
            for f, v in zip(phis, vals):
                grid.append(float(a), float(f), v, v >= 0)
            curve.append(float(a), phi_star)
        out[f"coalition_boundary_{panel}.csv"] = grid
        out[f"coalition_boundary_{panel}_curve.csv"] = curve
    game = _game(params)
    th = Table(("direction", "u_dot_r", "alpha_benign"), comment=_label("coalition_boundary", "a"))
    for key in ("aligned_direction", "anti_aligned_direction"):
        r_c = np.asarray(params[key], dtype=float)
        ur = float(game.u @ r_c)
        th.append(key, ur, alpha_benign(game, CoalitionSpec(r_c, phi=params["phi_max"])) if ur > 0 else math.inf)
    out["coalition_boundary_thresholds.csv"] = th
    return out


def _heatmap_row(params: dict, dirs: np.ndarray, phis: np.ndarray, alpha: float):
    return cooperative_fractions(_game(params), alpha, phis, dirs)


def run_coalition_heatmap(params: dict, seed: int, workers: int = 1) -> dict[str, Table]:
    game = _game(params)
    alphas = np.linspace(0.0, params["alpha_max"], params["alpha_points"])
    phis = np.linspace(0.0, params["phi_max"], params["phi_points"])
    dirs = DirectionSampler(params["tilt"]).draw(np.random.default_rng(seed), game.u, params["draws"])
    rows = pmap(partial(_heatmap_row, params, dirs, phis), [float(a) for a in alphas], workers)
    frac = np.vstack(rows)
    t = Table(("alpha", "phi", "cooperative_fraction"), comment=_label("coalition_heatmap", "main"))
    for i, a in enumerate(alphas):
        for j, f in enumerate(phis):
            t.append(float(a), float(f), float(frac[i, j]))
    b = Table(("phi", "alpha_half"), comment=_label("coalition_heatmap", "boundary"))
    for j, f in enumerate(phis):
        hit = np.flatnonzero(frac[:, j] >= 0.5)
        b.append(float(f), float(alphas[hit[0]]) if hit.size else math.nan)
    return {"coalition_heatmap.csv": t, "coalition_heatmap_boundary.csv": b}


# --- mechanism -------------------------------------------------------------------


def _mech_cell(params: dict, cell):
    reward, alpha, pi = cell
    game = _game(params, reward)
    mix = MixPolicy(pi, eta=params["mix"]["eta"])
    mixed = game.with_reward(mixed_reward(game, mix))
    s = build_sanction(mixed, alpha)
    sol = solve_manipulation(mixed, s)
    return sol.index_value, pog_report(mixed, s).pog_exact, sol.constraint_active


def _agg_cell(args):
    spec, n, model, reps, seed = args
    return evaluate_aggregator(spec, n, model, reps, seed)


def run_mechanism_grid(params: dict, seed: int, workers: int = 1) -> dict[str, Table]:
    base = _game(params)
    aligned = optimal_reward_direction(base)
    mis = np.asarray(params["misaligned_reward"], dtype=float)
    mis = mis / np.linalg.norm(mis)
    alphas = np.linspace(0.0, params["alpha_max"], params["alpha_points"])
    pis = params["mix"]["pi"]
    out = {}
    for tag, reward, panels in (("aligned", aligned, "ab"), ("misaligned", mis, "cd")):
        cells = [(tuple(reward), float(a), float(p)) for a in alphas for p in pis]
        res = pmap(partial(_mech_cell, params), cells, workers)
        t = Table(("alpha", "pi", "index", "pog", "constraint_active"), comment=_label("mechanism_grid", panels))
        for (_, a, p), (m, pog, act) in zip(cells, res):
            t.append(a, p, m, pog, act)
        out[f"mechanism_grid_{tag}.csv"] = t

    ag = params["aggregators"]
    n = ag["n"]
    specs = [AggregatorSpec("mean"), AggregatorSpec("median")]
    specs += [AggregatorSpec("trimmed", trim_k=k) for k in ag["trim_k"] if 2 * k < n]
    specs.append(AggregatorSpec("sorted_weighted"))
    t = Table(
        ("rho", "aggregator", "variance", "sensitivity", "gradient_sensitivity", "n_eff", "on_frontier"),
        comment=_label("mechanism_grid", "aggregator frontier"),
    )
    cells = []
    for ri, rho in enumerate(ag["rho"]):
        model = ContaminationModel(rho, ag["sigma_s"], ag["attack_multiple"] * ag["sigma_s"])
        for si, spec in enumerate(specs):
            cells.append((spec, n, model, ag["reps"], cell_seed(seed, ri * len(specs) + si)))
    pts = pmap(_agg_cell, cells, workers)
    for ri, rho in enumerate(ag["rho"]):
        block = pts[ri * len(specs) : (ri + 1) * len(specs)]
        keep = set(non_dominated([(p.variance, p.sensitivity) for p in block]))
        for k, p in enumerate(block):
            t.append(float(rho), p.spec.label, p.variance, p.sensitivity, p.gradient_sensitivity, p.n_eff, k in keep)
    out["mechanism_grid_aggregators.csv"] = t
    return out


# --- power -------------------------------------------------------------------------


def _power_row(params: dict, s2: float, c2: float, pi: float):
    lb = np.asarray(params["lb"], dtype=float)
    model = ObservationModel(
        lb=lb,
        sigma_prime=s2 * np.eye(lb.shape[0]),
        u=np.asarray(params["u"], dtype=float),
        mix=MixPolicy(pi, eta=params["mix"]["eta"], sigma_c=math.sqrt(c2)),
    )
    spec = PowerSpec(params["significance"], params["power_target"], np.asarray(params["z_alt"], dtype=float))
    d2 = noncentrality(model, spec.z_alt)
    if d2 <= 0:
        return d2, math.inf, math.inf, math.inf
    return d2, required_n_raw(spec, d2), required_n(spec, d2), required_n_tail(params["tail_delta"], d2)


def run_power_contours(params: dict, seed: int, workers: int = 1) -> dict[str, Table]:
    out = {}
    cols = ("sigma_s2", "sigma_c2", "pi", "noncentrality", "required_n_raw", "required_n", "required_n_tail")
    for panel, pairs in (
        ("a", [(s2, params["fixed_sigma_c2"]) for s2 in params["sigma_s2"]]),
        ("b", [(params["fixed_sigma_s2"], c2) for c2 in params["sigma_c2"]]),
    ):
        t = Table(cols, comment=_label("power_contours", panel))
        for s2, c2 in pairs:
            for pi in params["mix"]["pi"]:
                t.append(s2, c2, pi, *_power_row(params, s2, c2, pi))
        out[f"power_contours_{panel}.csv"] = t
    return out


# --- audit allocation -------------------------------------------------------------


def _audit_cell(params: dict, cell):
    idx, s = cell
    rng = np.random.default_rng(s)
    m = int(rng.integers(params["m_min"], params["m_max"] + 1))
    pr = int(rng.integers(params["risks_min"], params["risks_max"] + 1))
    inst = random_instance(rng, m, pr, params["density"])
    g = lazy_greedy(inst)
    nv = naive_greedy(inst)
    opt = exhaustive_opt(inst)
    ls = local_search(inst, g, params["max_swaps"])
    ratio = g.objective / opt.objective if opt.objective > 0 else 1.0
    return (
        idx, m, pr, inst.budget, g.objective, opt.objective, ratio, ls.objective,
        g.evaluations, nv.evaluations, g.selected == nv.selected,
    )


def run_audit_greedy_bench(params: dict, seed: int, workers: int = 1) -> dict[str, Table]:
    cells = [(i, cell_seed(seed, i)) for i in range(params["instances"])]
    rows = pmap(partial(_audit_cell, params), cells, workers)
    t = Table(
        ("instance", "m", "risks", "budget", "greedy", "optimum", "ratio", "local_search",
         "lazy_evaluations", "naive_evaluations", "lazy_matches_naive"),
        rows,
        _label("audit_greedy_bench", "main"),
    )
    return {"audit_greedy_bench.csv": t}


RUNNERS = {
    "static_threshold": run_static_threshold,
    "alpha_min_contour": run_alpha_min_contour,
    "dynamics_trajectories": run_dynamics_trajectories,
    "exit_fixedpoint_sweeps": run_exit_fixedpoint_sweeps,
    "coalition_boundary": run_coalition_boundary,
    "coalition_heatmap": run_coalition_heatmap,
    "mechanism_grid": run_mechanism_grid,
    "power_contours": run_power_contours,
    "audit_greedy_bench": run_audit_greedy_bench,
}
