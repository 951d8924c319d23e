"""Experiment configuration: TOML parsing, defaults, strict key checking and ranges.

A config file holds three reserved top-level keys (``experiment``, ``seed``,
``output_dir``); every other key or table overrides the experiment's defaults
listed in :data:`DEFAULTS`. Unknown keys are rejected in strict mode and
logged as warnings otherwise.
"""
from __future__ import annotations

import copy
import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - exercised on 3.10
    import tomli as tomllib

from ..errors import InvalidConfig, ParseError, RangeError

log = logging.getLogger(__name__)

RESERVED = ("experiment", "seed", "output_dir")

_GAME = {"u": [1.0, 0.0, 0.0], "h_diag": [1.0, 2.0, 0.5], "q": 0.25, "u_hon": 1.0}

DEFAULTS: dict[str, dict[str, Any]] = {
    "static_threshold": {
        "game": dict(_GAME),
        "angles_deg": [0.0, 30.0, 60.0, 90.0],
        "reward_norm": 1.0,
        "alpha_max": 10.0,
        "alpha_points": 41,
    },
    "alpha_min_contour": {
        "game": dict(_GAME),
        "reward_norm": 1.0,
        "angle_max_deg": 90.0,
        "angle_points": 19,
        "tau_min": 0.001,
        "tau_max": 1.0,
        "tau_points": 31,
    },
    "dynamics_trajectories": {
        "retention": {"b1": 2.4, "sigma": 0.08, "alpha": 0.0},
        "initial": [0.1, 0.3, 0.45, 0.49, 0.5, 0.51, 0.55, 0.7, 0.9],
        "steps": 30,
        "hysteresis_points": 21,
    },
    "exit_fixedpoint_sweeps": {
        "retention": {"b0": -1.2, "b1": 2.4, "alpha": 0.0, "mu": 0.0, "sigma": 0.08},
        "alpha_grid": {"start": 0.0, "stop": 1.5, "num": 61},
        "sigma_grid": {"start": 0.05, "stop": 1.0, "num": 96},
        "mu_grid": {"start": -1.5, "stop": 1.5, "num": 61},
        "cap": {"alpha_cap": 0.6, "start": 0.0, "stop": 1.5, "num": 61},
    },
    "coalition_boundary": {
        "game": dict(_GAME),
        "aligned_direction": [1.0, 1.0, 0.5],
        "anti_aligned_direction": [-0.3, 1.0, 0.5],
        "alpha_max": 5.0,
        "phi_max": 5.0,
        "points": 51,
    },
    "coalition_heatmap": {
        "game": dict(_GAME),
        "alpha_max": 5.0,
        "phi_max": 5.0,
        "alpha_points": 51,
        "phi_points": 51,
        "draws": 500,
        "tilt": 1.0,
    },
    "mechanism_grid": {
        "game": dict(_GAME),
        "misaligned_reward": [-0.3, 1.0, 0.0],
        "alpha_max": 5.0,
        "alpha_points": 21,
        "mix": {"pi": [i / 20 for i in range(21)], "eta": 1.0},
        "aggregators": {
            "n": 50,
            "reps": 2000,
            "rho": [0.0, 0.1, 0.3],
            "sigma_s": 1.0,
            "attack_multiple": 10.0,
            "trim_k": [1, 2, 5, 10, 20],
        },
    },
    "power_contours": {
        "lb": [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
        "u": [1.0, 1.0, 1.0],
        "z_alt": [0.2, 0.1, 0.5],
        "significance": 0.05,
        "power_target": 0.8,
        "mix": {"pi": [i / 20 for i in range(21)], "eta": 1.0},
        "sigma_s2": [0.25, 0.5, 1.0, 2.0, 4.0, 8.0],
        "sigma_c2": [0.25, 0.5, 1.0, 2.0, 4.0, 8.0],
        "fixed_sigma_s2": 1.0,
        "fixed_sigma_c2": 1.0,
        "tail_delta": 0.05,
    },
    "audit_greedy_bench": {
        "instances": 50,
        "m_min": 4,
        "m_max": 12,
        "risks_min": 2,
        "risks_max": 6,
        "density": 0.5,
        "max_swaps": 50,
    },
}

# path -> (low, high, bounds); bounds uses interval brackets, None leaves a side open.
RANGES: dict[str, tuple[float | None, float | None, str]] = {
    "game.q": (0.0, None, "[)"),
    "game.u_hon": (0.0, None, "()"),
    "game.h_diag": (0.0, None, "[)"),
    "reward_norm": (0.0, None, "()"),
    "alpha_max": (0.0, None, "[)"),
    "phi_max": (0.0, None, "[)"),
    "alpha_points": (2, 10_000, "[]"),
    "phi_points": (2, 10_000, "[]"),
    "points": (2, 10_000, "[]"),
    "angle_points": (2, 10_000, "[]"),
    "angle_max_deg": (0.0, 180.0, "[]"),
    "angles_deg": (0.0, 180.0, "[]"),
    "tau_points": (2, 10_000, "[]"),
    "tau_min": (0.0, None, "()"),
    "tau_max": (0.0, None, "()"),
    "draws": (100, 10_000_000, "[]"),
    "retention.sigma": (0.0, None, "()"),
    "retention.b1": (0.0, None, "()"),
    "retention.alpha": (0.0, None, "[)"),
    "steps": (1, 1_000_000, "[]"),
    "initial": (0.0, 1.0, "[]"),
    "hysteresis_points": (2, 100_000, "[]"),
    "sigma_grid.start": (0.0, None, "()"),
    "sigma_grid.stop": (0.0, None, "()"),
    "alpha_grid.start": (0.0, None, "[)"),
    "alpha_grid.stop": (0.0, None, "[)"),
    "cap.alpha_cap": (0.0, None, "[)"),
    "cap.start": (0.0, None, "[)"),
    "cap.stop": (0.0, None, "[)"),
    "mix.pi": (0.0, 1.0, "[]"),
    "aggregators.n": (3, 100_000, "[]"),
    "aggregators.reps": (1000, 10_000_000, "[]"),
    "aggregators.rho": (0.0, 0.5, "[)"),
    "aggregators.sigma_s": (0.0, None, "()"),
    "aggregators.attack_multiple": (0.0, None, "()"),
    "aggregators.trim_k": (0, None, "[)"),
    "significance": (0.0, 1.0, "()"),
    "power_target": (0.0, 1.0, "()"),
    "sigma_s2": (0.0, None, "()"),
    "sigma_c2": (0.0, None, "()"),
    "fixed_sigma_s2": (0.0, None, "()"),
    "fixed_sigma_c2": (0.0, None, "()"),
    "tail_delta": (0.0, 1.0, "()"),
    "instances": (1, 100_000, "[]"),
    "m_min": (1, 20, "[]"),
    "m_max": (1, 20, "[]"),
    "risks_min": (1, 1000, "[]"),
    "risks_max": (1, 1000, "[]"),
    "density": (0.0, 1.0, "[]"),
    "max_swaps": (0, 100_000, "[]"),
}

SEED_MAX = 2**64 - 1


@dataclass(frozen=True)
class ExperimentConfig:
    experiment_id: str
    parameters: dict
    seed: int
    output_dir: Path | None = None
    warnings: tuple[str, ...] = field(default=(), compare=False)

    def canonical(self) -> str:
        return json.dumps(
            {"experiment": self.experiment_id, "seed": self.seed, "parameters": self.parameters},
            sort_keys=True,
            separators=(",", ":"),
        )

    def digest(self) -> str:
        return hashlib.sha256(self.canonical().encode("utf-8")).hexdigest()


def _is_number(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def _merge(default, given, path: str, strict: bool, warnings: list[str]):
    if isinstance(default, dict):
        if not isinstance(given, dict):
            raise InvalidConfig("expected a table", path)
        out = copy.deepcopy(default)
        for key, val in given.items():
            sub = f"{path}.{key}" if path else key
            if key not in default:
                if strict:
                    raise InvalidConfig("unknown key", sub)
                warnings.append(f"ignoring unknown key {sub}")
                log.warning("ignoring unknown key %s", sub)
                continue
            out[key] = _merge(default[key], val, sub, strict, warnings)
        return out
    return _coerce(default, given, path)


def _coerce(default, given, path: str):
    if isinstance(default, bool):
        if not isinstance(given, bool):
            raise InvalidConfig("expected a boolean", path)
        return given
    if isinstance(default, int):
        if not (isinstance(given, int) and not isinstance(given, bool)):
            raise InvalidConfig("expected an integer", path)
        return given
    if isinstance(default, float):
        if not _is_number(given):
            raise InvalidConfig("expected a number", path)
        if not math.isfinite(given):
            raise RangeError("must be finite", path)
        return float(given)
    if isinstance(default, str):
        if not isinstance(given, str):
            raise InvalidConfig("expected a string", path)
        return given
    if isinstance(default, list):
        if not isinstance(given, list) or not given:
            raise InvalidConfig("expected a nonempty array", path)
        proto = default[0]
        return [_coerce(proto, g, f"{path}[{i}]") for i, g in enumerate(given)]
    raise InvalidConfig("unsupported value", path)  # pragma: no cover


def _leaves(tree, path=""):
    if isinstance(tree, dict):
        for k, v in tree.items():
            yield from _leaves(v, f"{path}.{k}" if path else k)
    else:
        yield path, tree


def _check_value(path: str, x: float, lo, hi, bounds: str):
    if lo is not None and (x < lo or (bounds[0] == "(" and x == lo)):
        raise RangeError(f"value {x} outside {bounds[0]}{lo}, {hi}{bounds[1]}", path)
    if hi is not None and (x > hi or (bounds[1] == ")" and x == hi)):
        raise RangeError(f"value {x} outside {bounds[0]}{lo}, {hi}{bounds[1]}", path)


def _check_ranges(params: dict):
    for path, val in _leaves(params):
        rule = RANGES.get(path)
        if rule is None:
            continue
        values = val if isinstance(val, list) else [val]
        for x in values:
            if isinstance(x, list):
                continue
            _check_value(path, x, *rule)


def _check_consistency(exp: str, p: dict):
    if exp == "alpha_min_contour" and p["tau_min"] >= p["tau_max"]:
        raise RangeError("tau_min must be below tau_max", "tau_min")
    if exp == "audit_greedy_bench":
        if p["m_min"] > p["m_max"]:
            raise RangeError("m_min exceeds m_max", "m_min")
        if p["risks_min"] > p["risks_max"]:
            raise RangeError("risks_min exceeds risks_max", "risks_min")
    game = p.get("game")
    if game is not None and len(game["u"]) != len(game["h_diag"]):
        raise RangeError("u and h_diag must have equal length", "game.u")
    if game is not None and not any(game["u"]):
        raise RangeError("welfare gradient must be nonzero", "game.u")
    if exp == "exit_fixedpoint_sweeps":
        for key in ("alpha_grid", "sigma_grid", "mu_grid", "cap"):
            if p[key]["num"] < 2:
                raise RangeError("need at least two grid points", f"{key}.num")


def parse_toml(raw: str) -> dict:
    try:
        return tomllib.loads(raw)
    except tomllib.TOMLDecodeError as exc:
        line = getattr(exc, "lineno", None)
        col = getattr(exc, "colno", None)
        msg = getattr(exc, "msg", str(exc))
        raise ParseError(msg, line, col) from exc


def validate_config(
    raw: str | dict,
    experiment_id: str | None = None,
    *,
    seed: int | None = None,
    strict: bool = True,
) -> ExperimentConfig:
    """Parse, default and range-check a configuration.

    ``experiment_id`` and ``seed`` given here (from the command line) take the
    place of the file's values; a disagreeing ``experiment`` key is an error.
    """
    data = parse_toml(raw) if isinstance(raw, str) else copy.deepcopy(raw)
    file_exp = data.pop("experiment", None)
    exp = experiment_id or file_exp
    if exp is None:
        raise InvalidConfig("no experiment id given", "experiment")
    if exp not in DEFAULTS:
        raise InvalidConfig(f"unknown experiment {exp!r}", "experiment")
    if file_exp is not None and experiment_id is not None and file_exp != experiment_id:
        raise InvalidConfig(f"file is for {file_exp!r}, not {experiment_id!r}", "experiment")

    file_seed = data.pop("seed", None)
    chosen_seed = seed if seed is not None else file_seed
    if chosen_seed is None:
        raise InvalidConfig("an explicit seed is required", "seed")
    if not isinstance(chosen_seed, int) or isinstance(chosen_seed, bool):
        raise InvalidConfig("seed must be an integer", "seed")
    if not 0 <= chosen_seed <= SEED_MAX:
        raise RangeError("seed must fit in an unsigned 64-bit integer", "seed")

    out_dir = data.pop("output_dir", None)
    if out_dir is not None and not isinstance(out_dir, str):
        raise InvalidConfig("expected a path string", "output_dir")

    warnings: list[str] = []
    params = _merge(DEFAULTS[exp], data, "", strict, warnings)
    _check_ranges(params)
    _check_consistency(exp, params)
    return ExperimentConfig(exp, params, chosen_seed, Path(out_dir) if out_dir else None, tuple(warnings))


def default_config(experiment_id: str, seed: int) -> ExperimentConfig:
    return validate_config({}, experiment_id, seed=seed)
